//! Hierarchical pattern transduction trees.
//!
//! A tree file holds `(tree NAME node...)` forms. A node is
//! `(node "pattern" [:on N] child-or-directive...)` where each child is
//! another node and a terminal node carries exactly one directive:
//!
//! ```text
//! (gist topic "template")   (say "template")   (subtree name [N])
//! (schema name)             (ulf recipe)       (fail)
//! ```
//!
//! Children are matched against the same words as their parent, or against
//! capture `N` of the parent when `:on N` is given. Traversal is depth-first
//! in document order and the first matching terminal decides the result.

mod pattern;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::el::{parse_all_spanned, Expr, ParseError, Pos, Spanned, Symbol};

pub use pattern::{
    match_pattern, parse_pattern, tokenize, FeatureLexicon, LexiconError, MatchResult, PatternToken,
};

pub const DEFAULT_MAX_DEPTH: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateToken {
    Word(String),
    /// 1-based capture index.
    Slot(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Template(pub Vec<TemplateToken>);

impl Template {
    pub fn parse(text: &str) -> Self {
        Template(
            text.split_whitespace()
                .map(|w| match w.parse::<usize>() {
                    Ok(n) if w.bytes().all(|b| b.is_ascii_digit()) => TemplateToken::Slot(n),
                    _ => TemplateToken::Word(w.to_lowercase()),
                })
                .collect(),
        )
    }

    pub fn max_slot(&self) -> usize {
        self.0
            .iter()
            .filter_map(|t| match t {
                TemplateToken::Slot(n) => Some(*n),
                TemplateToken::Word(_) => None,
            })
            .max()
            .unwrap_or(0)
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            match t {
                TemplateToken::Word(w) => f.write_str(w)?,
                TemplateToken::Slot(n) => write!(f, "{n}")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("slot {slot} out of range ({available} captures)")]
    SlotOutOfRange { slot: usize, available: usize },
}

/// Replaces slots by the captured spans, copying other words.
pub fn fill_template(template: &Template, captures: &[Vec<String>]) -> Result<Vec<String>, TemplateError> {
    let mut out = Vec::new();
    for tok in &template.0 {
        match tok {
            TemplateToken::Word(w) => out.push(w.clone()),
            TemplateToken::Slot(n) => {
                let span = n
                    .checked_sub(1)
                    .and_then(|i| captures.get(i))
                    .ok_or(TemplateError::SlotOutOfRange { slot: *n, available: captures.len() })?;
                out.extend(span.iter().cloned());
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Directive {
    Gist { topic: Symbol, template: Template },
    Say(Template),
    Subtree { tree: String, capture: Option<usize> },
    Schema(Symbol),
    /// An expression in which `(:sub N tree)`, `(:lex N suffix)` and
    /// `(:word N)` are replaced using the captures.
    Ulf(Expr),
    Fail,
}

impl Directive {
    pub fn kind(&self) -> &'static str {
        match self {
            Directive::Gist { .. } => "gist",
            Directive::Say(_) => "say",
            Directive::Subtree { .. } => "subtree",
            Directive::Schema(_) => "schema",
            Directive::Ulf(_) => "ulf",
            Directive::Fail => "fail",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternNode {
    pub pattern: Vec<PatternToken>,
    pub on: Option<usize>,
    pub children: Vec<PatternNode>,
    pub directive: Option<Directive>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransductionTree {
    pub name: String,
    pub roots: Vec<PatternNode>,
    pub file: Option<String>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeErrorKind {
    #[error("{0}")]
    Parse(ParseError),
    #[error("malformed: {0}")]
    Malformed(String),
    #[error("dangling subtree reference `{0}`")]
    DanglingSubtree(String),
    #[error("unknown feature `.{0}`")]
    UnknownFeature(String),
    #[error("missing directive: {0}")]
    MissingDirective(String),
    #[error("duplicate tree `{0}`")]
    DuplicateTree(String),
    #[error("slot {slot} exceeds the {available} captures of the pattern")]
    SlotOutOfRange { slot: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct TreeError {
    pub kind: TreeErrorKind,
    pub file: Option<String>,
    pub pos: Pos,
}

impl fmt::Display for TreeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.file {
            Some(file) => write!(f, "{file}:{}: {}", self.pos, self.kind),
            None => write!(f, "{}: {}", self.pos, self.kind),
        }
    }
}

fn err(kind: TreeErrorKind, file: Option<&str>, pos: Pos) -> TreeError {
    TreeError { kind, file: file.map(String::from), pos }
}

/// Reads the tree forms of one file without resolving references.
pub fn parse_tree_file(text: &str, file: Option<&str>) -> Result<Vec<TransductionTree>, TreeError> {
    let forms = parse_all_spanned(text).map_err(|e| {
        let pos = e.pos();
        err(TreeErrorKind::Parse(e), file, pos)
    })?;
    if forms.is_empty() {
        return Err(err(TreeErrorKind::MissingDirective("file defines no trees".into()), file, Pos { line: 1, column: 1 }));
    }
    forms.iter().map(|f| read_tree(f, file)).collect()
}

/// Parses a self-contained tree file and resolves it against `lex`.
/// Returns the first tree in the file.
pub fn parse_tree(text: &str, lex: &FeatureLexicon) -> Result<TransductionTree, TreeError> {
    let trees = parse_tree_file(text, None)?;
    let first = trees[0].clone();
    TreeSet::new(trees, lex.clone()).map_err(|mut errs| errs.remove(0))?;
    Ok(first)
}

fn head_is(s: &Spanned, name: &str) -> bool {
    s.items.first().is_some_and(|h| h.expr.is_symbol(name))
}

fn read_tree(form: &Spanned, file: Option<&str>) -> Result<TransductionTree, TreeError> {
    if !head_is(form, "tree") {
        return Err(err(TreeErrorKind::Malformed("expected (tree NAME node...)".into()), file, form.pos));
    }
    let name = form
        .items
        .get(1)
        .and_then(|s| s.expr.as_symbol())
        .ok_or_else(|| err(TreeErrorKind::Malformed("tree needs a name".into()), file, form.pos))?;
    let mut roots = Vec::new();
    for item in &form.items[2..] {
        roots.push(read_node(item, file)?);
    }
    if roots.is_empty() {
        return Err(err(TreeErrorKind::MissingDirective(format!("tree `{name}` has no nodes")), file, form.pos));
    }
    Ok(TransductionTree { name: name.as_str().to_string(), roots, file: file.map(String::from), pos: form.pos })
}

fn read_index(s: Option<&Spanned>, file: Option<&str>, at: Pos, what: &str) -> Result<usize, TreeError> {
    s.and_then(|s| s.expr.as_number())
        .filter(|n| n.fract() == 0.0 && *n >= 1.0)
        .map(|n| n as usize)
        .ok_or_else(|| err(TreeErrorKind::Malformed(format!("{what} needs a positive integer")), file, at))
}

fn read_node(form: &Spanned, file: Option<&str>) -> Result<PatternNode, TreeError> {
    let malformed = |msg: &str, pos| err(TreeErrorKind::Malformed(msg.into()), file, pos);
    if !head_is(form, "node") {
        return Err(malformed("expected (node \"pattern\" ...)", form.pos));
    }
    let words = form
        .items
        .get(1)
        .and_then(|s| s.expr.as_words())
        .ok_or_else(|| malformed("node pattern must be a quoted string", form.pos))?;
    let pattern = words.iter().map(|w| PatternToken::from_word(w.text())).collect();
    let mut rest = &form.items[2..];
    let mut on = None;
    if rest.first().is_some_and(|s| s.expr.is_symbol(":on")) {
        on = Some(read_index(rest.get(1), file, rest[0].pos, ":on")?);
        rest = &rest[2.min(rest.len())..];
    }
    let mut children = Vec::new();
    let mut directive = None;
    for item in rest {
        if head_is(item, "node") {
            children.push(read_node(item, file)?);
        } else {
            if directive.is_some() {
                return Err(malformed("node has more than one directive", item.pos));
            }
            directive = Some(read_directive(item, file)?);
        }
    }
    match (&directive, children.is_empty()) {
        (None, true) => {
            return Err(err(TreeErrorKind::MissingDirective("terminal node without a directive".into()), file, form.pos))
        }
        (Some(_), false) => return Err(malformed("node has both children and a directive", form.pos)),
        _ => {}
    }
    Ok(PatternNode { pattern, on, children, directive, pos: form.pos })
}

fn read_directive(form: &Spanned, file: Option<&str>) -> Result<Directive, TreeError> {
    let malformed = |msg: String| err(TreeErrorKind::Malformed(msg), file, form.pos);
    let head = form
        .items
        .first()
        .and_then(|h| h.expr.as_symbol())
        .ok_or_else(|| malformed("expected a directive".into()))?;
    let arg = |i: usize| form.items.get(i).map(|s| &s.expr);
    let n = form.items.len();
    let template = |i: usize| {
        arg(i)
            .and_then(Expr::as_words)
            .map(|ws| Template::parse(&ws.iter().map(|w| w.text()).collect::<Vec<_>>().join(" ")))
            .ok_or_else(|| malformed(format!("({head} ...) needs a quoted template")))
    };
    let name = |i: usize| {
        arg(i)
            .and_then(Expr::as_symbol)
            .cloned()
            .ok_or_else(|| malformed(format!("({head} ...) needs a name")))
    };
    let d = match head.as_str() {
        "gist" if n == 3 => Directive::Gist { topic: name(1)?, template: template(2)? },
        "say" if n == 2 => Directive::Say(template(1)?),
        "subtree" if n == 2 || n == 3 => Directive::Subtree {
            tree: name(1)?.as_str().to_string(),
            capture: if n == 3 { Some(read_index(form.items.get(2), file, form.pos, "subtree")?) } else { None },
        },
        "schema" if n == 2 => Directive::Schema(name(1)?),
        "ulf" if n == 2 => Directive::Ulf(arg(1).cloned().unwrap_or(Expr::sym("nil"))),
        "fail" if n == 1 => Directive::Fail,
        other => return Err(malformed(format!("unknown or ill-formed directive `{other}`"))),
    };
    Ok(d)
}

/// Resolved directive output.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DirectiveResult {
    Gist { topic: Symbol, words: Vec<String> },
    Say { words: Vec<String> },
    Ulf { ulf: Expr },
    Schema { name: Symbol },
    Fail,
}

impl DirectiveResult {
    pub fn kind(&self) -> &'static str {
        match self {
            DirectiveResult::Gist { .. } => "gist",
            DirectiveResult::Say { .. } => "say",
            DirectiveResult::Ulf { .. } => "ulf",
            DirectiveResult::Schema { .. } => "schema",
            DirectiveResult::Fail => "fail",
        }
    }

    /// Output rendered the way the test harness compares it.
    pub fn render(&self) -> String {
        match self {
            DirectiveResult::Gist { words, .. } | DirectiveResult::Say { words } => words.join(" "),
            DirectiveResult::Ulf { ulf } => ulf.to_string(),
            DirectiveResult::Schema { name } => name.to_string(),
            DirectiveResult::Fail => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transduction {
    pub result: DirectiveResult,
    /// Node path of every node entered along the winning chain, e.g. `react.general#2.1`.
    pub trace: Vec<String>,
}

/// A validated collection of trees sharing one lexicon.
#[derive(Debug, Clone, Default)]
pub struct TreeSet {
    trees: BTreeMap<String, TransductionTree>,
    lexicon: FeatureLexicon,
    max_depth: usize,
}

impl TreeSet {
    /// Checks duplicate names, subtree references, features and slots.
    /// Every problem found is reported.
    pub fn new(trees: Vec<TransductionTree>, lexicon: FeatureLexicon) -> Result<Self, Vec<TreeError>> {
        let mut errors = Vec::new();
        let mut map = BTreeMap::new();
        for t in trees {
            if map.contains_key(&t.name) {
                errors.push(err(TreeErrorKind::DuplicateTree(t.name.clone()), t.file.as_deref(), t.pos));
                continue;
            }
            map.insert(t.name.clone(), t);
        }
        for t in map.values() {
            for node in &t.roots {
                check_node(node, t, &map, &lexicon, &mut errors);
            }
        }
        if errors.is_empty() {
            Ok(TreeSet { trees: map, lexicon, max_depth: DEFAULT_MAX_DEPTH })
        } else {
            Err(errors)
        }
    }

    pub fn with_max_depth(mut self, depth: usize) -> Self {
        self.max_depth = depth;
        self
    }

    pub fn get(&self, name: &str) -> Option<&TransductionTree> {
        self.trees.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.trees.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.trees.keys().map(String::as_str)
    }

    pub fn trees(&self) -> impl Iterator<Item = &TransductionTree> {
        self.trees.values()
    }

    pub fn lexicon(&self) -> &FeatureLexicon {
        &self.lexicon
    }

    /// Runs the named tree. `None` when the tree is unknown, nothing matches,
    /// or the first matching terminal cannot produce a result.
    pub fn transduce(&self, tree: &str, words: &[String]) -> Option<Transduction> {
        let mut trace = Vec::new();
        let result = self.run(tree, words, 0, &mut trace)?;
        Some(Transduction { result, trace })
    }

    /// Every result the tree can produce for `words`, in document order.
    pub fn transduce_all(&self, tree: &str, words: &[String]) -> Vec<Transduction> {
        let mut out = Vec::new();
        if let Some(t) = self.trees.get(tree) {
            for (i, node) in t.roots.iter().enumerate() {
                let path = format!("{}#{}", t.name, i + 1);
                self.collect(node, words, path, &mut Vec::new(), &mut out);
            }
        }
        out
    }

    fn run(&self, tree: &str, words: &[String], depth: usize, trace: &mut Vec<String>) -> Option<DirectiveResult> {
        if depth > self.max_depth {
            trace.push(format!("{tree}:depth-limit"));
            return None;
        }
        let t = self.trees.get(tree)?;
        for (i, node) in t.roots.iter().enumerate() {
            let path = format!("{}#{}", t.name, i + 1);
            if let Step::Decided(r) = self.visit(node, words, &path, depth, trace) {
                return r;
            }
        }
        None
    }

    fn visit(&self, node: &PatternNode, words: &[String], path: &str, depth: usize, trace: &mut Vec<String>) -> Step {
        let Some(m) = match_pattern(&node.pattern, words, &self.lexicon) else {
            return Step::NoMatch;
        };
        trace.push(path.to_string());
        if let Some(d) = &node.directive {
            return Step::Decided(self.apply(d, words, &m, depth, trace));
        }
        for (i, child) in node.children.iter().enumerate() {
            let input = match child.on {
                Some(n) => match m.captures.get(n - 1) {
                    Some(c) => c.as_slice(),
                    None => continue,
                },
                None => words,
            };
            let child_path = format!("{path}.{}", i + 1);
            if let decided @ Step::Decided(_) = self.visit(child, input, &child_path, depth, trace) {
                return decided;
            }
        }
        trace.pop();
        Step::NoMatch
    }

    fn collect(&self, node: &PatternNode, words: &[String], path: String, trace: &mut Vec<String>, out: &mut Vec<Transduction>) {
        let Some(m) = match_pattern(&node.pattern, words, &self.lexicon) else {
            return;
        };
        trace.push(path.clone());
        if let Some(d) = &node.directive {
            let mut t = trace.clone();
            if let Some(result) = self.apply(d, words, &m, 0, &mut t) {
                out.push(Transduction { result, trace: t });
            }
        } else {
            for (i, child) in node.children.iter().enumerate() {
                let input = match child.on {
                    Some(n) => match m.captures.get(n - 1) {
                        Some(c) => c.as_slice(),
                        None => continue,
                    },
                    None => words,
                };
                self.collect(child, input, format!("{path}.{}", i + 1), trace, out);
            }
        }
        trace.pop();
    }

    fn apply(
        &self,
        d: &Directive,
        words: &[String],
        m: &MatchResult,
        depth: usize,
        trace: &mut Vec<String>,
    ) -> Option<DirectiveResult> {
        match d {
            Directive::Gist { topic, template } => Some(DirectiveResult::Gist {
                topic: topic.clone(),
                words: fill_template(template, &m.captures).ok()?,
            }),
            Directive::Say(template) => Some(DirectiveResult::Say { words: fill_template(template, &m.captures).ok()? }),
            Directive::Subtree { tree, capture } => {
                let input = match capture {
                    Some(n) => m.captures.get(n - 1)?.as_slice(),
                    None => words,
                };
                self.run(tree, input, depth + 1, trace)
            }
            Directive::Schema(name) => Some(DirectiveResult::Schema { name: name.clone() }),
            Directive::Ulf(recipe) => {
                let ulf = self.build_ulf(recipe, &m.captures, depth, trace)?;
                Some(DirectiveResult::Ulf { ulf })
            }
            Directive::Fail => Some(DirectiveResult::Fail),
        }
    }

    fn build_ulf(&self, recipe: &Expr, captures: &[Vec<String>], depth: usize, trace: &mut Vec<String>) -> Option<Expr> {
        let Expr::List(items) = recipe else {
            return Some(recipe.clone());
        };
        let capture = |i: usize| items.get(i).and_then(Expr::as_number).and_then(|n| captures.get((n as usize).checked_sub(1)?));
        match items.first().and_then(Expr::as_symbol).map(Symbol::as_str) {
            Some(":sub") => {
                let span = capture(1)?;
                let tree = items.get(2)?.as_symbol()?;
                match self.run(tree.as_str(), span, depth + 1, trace)? {
                    DirectiveResult::Ulf { ulf } => Some(ulf),
                    _ => None,
                }
            }
            Some(":lex") => {
                let span = capture(1)?;
                if span.is_empty() {
                    return None;
                }
                let suffix = match items.get(2) {
                    Some(Expr::Symbol(s)) => s.as_str().to_string(),
                    Some(Expr::Words(ws)) => ws.iter().map(|w| w.norm()).collect(),
                    None => String::new(),
                    _ => return None,
                };
                Some(Expr::sym(format!("{}{suffix}", span.join("_"))))
            }
            Some(":word") => Some(Expr::words(&capture(1)?.join(" "))),
            _ => items
                .iter()
                .map(|i| self.build_ulf(i, captures, depth, trace))
                .collect::<Option<Vec<_>>>()
                .map(Expr::List),
        }
    }
}

enum Step {
    NoMatch,
    Decided(Option<DirectiveResult>),
}

fn capture_count(pattern: &[PatternToken]) -> usize {
    pattern.iter().filter(|t| t.captures()).count()
}

fn check_node(
    node: &PatternNode,
    tree: &TransductionTree,
    trees: &BTreeMap<String, TransductionTree>,
    lex: &FeatureLexicon,
    errors: &mut Vec<TreeError>,
) {
    let file = tree.file.as_deref();
    for tok in &node.pattern {
        if let PatternToken::Feature(f) = tok {
            if !lex.has_feature(f) {
                errors.push(err(TreeErrorKind::UnknownFeature(f.clone()), file, node.pos));
            }
        }
    }
    let available = capture_count(&node.pattern);
    let slot_error = |slot: usize| err(TreeErrorKind::SlotOutOfRange { slot, available }, file, node.pos);
    match &node.directive {
        Some(Directive::Gist { template, .. }) | Some(Directive::Say(template)) => {
            let slot = template.max_slot();
            if slot > available || template.0.contains(&TemplateToken::Slot(0)) {
                errors.push(slot_error(slot));
            }
        }
        Some(Directive::Subtree { tree: name, capture }) => {
            if !trees.contains_key(name) {
                errors.push(err(TreeErrorKind::DanglingSubtree(name.clone()), file, node.pos));
            }
            if let Some(n) = *capture {
                if n > available {
                    errors.push(slot_error(n));
                }
            }
        }
        Some(Directive::Ulf(recipe)) => check_recipe(recipe, available, trees, file, node.pos, errors),
        _ => {}
    }
    for child in &node.children {
        if let Some(n) = child.on {
            if n > available {
                errors.push(err(TreeErrorKind::SlotOutOfRange { slot: n, available }, file, child.pos));
            }
        }
        check_node(child, tree, trees, lex, errors);
    }
}

fn check_recipe(
    recipe: &Expr,
    available: usize,
    trees: &BTreeMap<String, TransductionTree>,
    file: Option<&str>,
    pos: Pos,
    errors: &mut Vec<TreeError>,
) {
    let Expr::List(items) = recipe else { return };
    let head = items.first().and_then(Expr::as_symbol).map(Symbol::as_str);
    if let Some(op @ (":sub" | ":lex" | ":word")) = head {
        match items.get(1).and_then(Expr::as_number) {
            Some(n) if n >= 1.0 && n.fract() == 0.0 && (n as usize) <= available => {}
            Some(n) => errors.push(err(TreeErrorKind::SlotOutOfRange { slot: n.max(0.0) as usize, available }, file, pos)),
            None => errors.push(err(TreeErrorKind::Malformed(format!("({op} N ...) needs a slot")), file, pos)),
        }
        if op == ":sub" {
            match items.get(2).and_then(Expr::as_symbol) {
                Some(t) if trees.contains_key(t.as_str()) => {}
                Some(t) => errors.push(err(TreeErrorKind::DanglingSubtree(t.to_string()), file, pos)),
                None => errors.push(err(TreeErrorKind::Malformed("(:sub N tree) needs a tree".into()), file, pos)),
            }
        }
        return;
    }
    for i in items {
        check_recipe(i, available, trees, file, pos, errors);
    }
}
