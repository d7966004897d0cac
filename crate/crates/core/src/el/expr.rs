use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Case-normalized symbol such as `say-to.v` or `sophie`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol(String);

impl Symbol {
    pub fn new(name: impl AsRef<str>) -> Self {
        Symbol(name.as_ref().to_lowercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Symbol {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Symbol {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d).map(Symbol::new)
    }
}

/// A `?`-prefixed variable. The stored name excludes the sigil.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Variable(String);

impl Variable {
    /// Accepts the name with or without the leading `?`.
    pub fn new(name: impl AsRef<str>) -> Self {
        let name = name.as_ref();
        let name = name.strip_prefix('?').unwrap_or(name);
        Variable(name.to_lowercase())
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "?{}", self.0)
    }
}

/// Participant indexicals `^me` and `^you`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Indexical {
    Me,
    You,
}

impl fmt::Display for Indexical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Indexical::Me => f.write_str("^me"),
            Indexical::You => f.write_str("^you"),
        }
    }
}

/// Finite real number. Equality and hashing are bitwise so that `Expr` can be `Eq`.
#[derive(Debug, Clone, Copy)]
pub struct Number(f64);

impl Number {
    /// Returns `None` for NaN and infinities.
    pub fn new(value: f64) -> Option<Self> {
        value.is_finite().then_some(Number(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl PartialEq for Number {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl Eq for Number {}

impl Hash for Number {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A word of a quoted word list. Compares case-insensitively, displays as written.
#[derive(Debug, Clone)]
pub struct Word {
    text: String,
    norm: String,
}

impl Word {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let norm = text.to_lowercase();
        Word { text, norm }
    }

    /// Original spelling.
    pub fn text(&self) -> &str {
        &self.text
    }

    /// Lowercased spelling used for comparison.
    pub fn norm(&self) -> &str {
        &self.norm
    }
}

impl PartialEq for Word {
    fn eq(&self, other: &Self) -> bool {
        self.norm == other.norm
    }
}

impl Eq for Word {}

impl Hash for Word {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.norm.hash(state);
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Parenthesized symbolic expression used for schemas, facts, gist clauses and ULF.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Symbol(Symbol),
    Variable(Variable),
    Indexical(Indexical),
    Number(Number),
    /// Quoted word list, e.g. a gist clause.
    Words(Vec<Word>),
    /// Nonempty ordered sequence.
    List(Vec<Expr>),
}

impl Expr {
    pub fn sym(name: impl AsRef<str>) -> Self {
        Expr::Symbol(Symbol::new(name))
    }

    pub fn var(name: impl AsRef<str>) -> Self {
        Expr::Variable(Variable::new(name))
    }

    pub fn num(value: f64) -> Self {
        Expr::Number(Number::new(value).expect("finite number"))
    }

    /// Word list from whitespace-separated text.
    pub fn words(text: &str) -> Self {
        Expr::Words(text.split_whitespace().map(Word::new).collect())
    }

    pub fn list(items: impl IntoIterator<Item = Expr>) -> Self {
        Expr::List(items.into_iter().collect())
    }

    pub fn as_symbol(&self) -> Option<&Symbol> {
        match self {
            Expr::Symbol(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_variable(&self) -> Option<&Variable> {
        match self {
            Expr::Variable(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Expr]> {
        match self {
            Expr::List(items) => Some(items),
            _ => None,
        }
    }

    pub fn as_words(&self) -> Option<&[Word]> {
        match self {
            Expr::Words(words) => Some(words),
            _ => None,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Expr::Number(n) => Some(n.value()),
            _ => None,
        }
    }

    /// True when `self` is the symbol `name` (case-insensitive).
    pub fn is_symbol(&self, name: &str) -> bool {
        matches!(self, Expr::Symbol(s) if s.as_str().eq_ignore_ascii_case(name))
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Expr::Variable(_) => false,
            Expr::List(items) => items.iter().all(Expr::is_ground),
            _ => true,
        }
    }

    pub fn contains_variable(&self, var: &Variable) -> bool {
        match self {
            Expr::Variable(v) => v == var,
            Expr::List(items) => items.iter().any(|e| e.contains_variable(var)),
            _ => false,
        }
    }

    pub fn contains_indexical(&self) -> bool {
        match self {
            Expr::Indexical(_) => true,
            Expr::List(items) => items.iter().any(Expr::contains_indexical),
            _ => false,
        }
    }

    /// Replaces `^me` / `^you` with the given participants.
    pub fn resolve_indexicals(&self, me: &Expr, you: &Expr) -> Expr {
        match self {
            Expr::Indexical(Indexical::Me) => me.clone(),
            Expr::Indexical(Indexical::You) => you.clone(),
            Expr::List(items) => {
                Expr::List(items.iter().map(|e| e.resolve_indexicals(me, you)).collect())
            }
            other => other.clone(),
        }
    }

    /// Predicate of a formula: second element of a 2+-ary list, first of a unary one.
    pub fn predicate(&self) -> Option<&Expr> {
        match self {
            Expr::List(items) if items.len() >= 2 => Some(&items[1]),
            Expr::List(items) if items.len() == 1 => Some(&items[0]),
            _ => None,
        }
    }

    /// First quoted word list found in a depth-first scan.
    pub fn first_words(&self) -> Option<&[Word]> {
        match self {
            Expr::Words(w) => Some(w),
            Expr::List(items) => items.iter().find_map(Expr::first_words),
            _ => None,
        }
    }

    pub fn free_variables(&self) -> BTreeSet<Variable> {
        let mut out = BTreeSet::new();
        self.collect_variables(&mut out);
        out
    }

    fn collect_variables(&self, out: &mut BTreeSet<Variable>) {
        match self {
            Expr::Variable(v) => {
                out.insert(v.clone());
            }
            Expr::List(items) => items.iter().for_each(|e| e.collect_variables(out)),
            _ => {}
        }
    }

    /// Variables in order of first occurrence.
    pub fn variables_in_order(&self) -> Vec<Variable> {
        fn walk(e: &Expr, out: &mut Vec<Variable>) {
            match e {
                Expr::Variable(v) if !out.contains(v) => out.push(v.clone()),
                Expr::List(items) => items.iter().for_each(|i| walk(i, out)),
                _ => {}
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::List(items) => 1 + items.iter().map(Expr::depth).max().unwrap_or(0),
            _ => 0,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Symbol(s) => write!(f, "{s}"),
            Expr::Variable(v) => write!(f, "{v}"),
            Expr::Indexical(i) => write!(f, "{i}"),
            Expr::Number(n) => write!(f, "{n}"),
            Expr::Words(words) => {
                f.write_str("\"")?;
                for (i, w) in words.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{w}")?;
                }
                f.write_str("\"")
            }
            Expr::List(items) => {
                f.write_str("(")?;
                for (i, e) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{e}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        super::parse_expr(&text).map_err(serde::de::Error::custom)
    }
}

/// Finite map from variables to expressions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bindings(BTreeMap<Variable, Expr>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, var: &Variable) -> Option<&Expr> {
        self.0.get(var)
    }

    /// Binds `var`, refusing a value that mentions `var` itself (occurs check).
    pub fn bind(&mut self, var: Variable, value: Expr) -> bool {
        if value.contains_variable(&var) {
            return false;
        }
        self.0.insert(var, value);
        true
    }

    pub fn contains(&self, var: &Variable) -> bool {
        self.0.contains_key(var)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Variable, &Expr)> {
        self.0.iter()
    }

    /// True when every binding of `self` is present, unchanged, in `other`.
    pub fn is_extended_by(&self, other: &Bindings) -> bool {
        self.0.iter().all(|(k, v)| other.get(k) == Some(v))
    }

    /// Adds the bindings of `other` whose variables are unbound here.
    pub fn merge_new(&mut self, other: &Bindings) {
        for (k, v) in other.iter() {
            self.0.entry(k.clone()).or_insert_with(|| v.clone());
        }
    }
}

impl FromIterator<(Variable, Expr)> for Bindings {
    fn from_iter<T: IntoIterator<Item = (Variable, Expr)>>(iter: T) -> Self {
        Bindings(iter.into_iter().collect())
    }
}

impl Serialize for Bindings {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(&k.to_string(), &v.to_string())?;
        }
        map.end()
    }
}
