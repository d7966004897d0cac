//! Dialogue schemas: declarative prototypes of (sub)dialogues.
//!
//! A schema file holds one form:
//!
//! ```text
//! (dial-schema ask-about-test-results
//!   :header ((^me ask-about-test-results.v ^you) ** ?e)
//!   :goals (?g1 (^me want.v (that (^me know.v (ans-to "do you know the results of my test ?")))))
//!   :episodes (?e1 (^me paraphrase-to.v ^you "do you know the results of my test ?")
//!              ?e2 (^you reply-to.v ?e1)
//!              ?e3 (^me react-to.v ?e2))
//!   :certainties (?e2 0.75))
//! ```
//!
//! Every section is a flat list of `label formula` pairs; `:necessities` and
//! `:certainties` pair labels with values in [0,1]. Two extension keys are
//! accepted besides the eleven sections: `:default-response "..."` and
//! `:max-clarifications N`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::el::{parse_expr, substitute, Bindings, Expr, ParseError, Symbol, Variable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum SectionKind {
    Episodes,
    EpisodeRelations,
    Types,
    RigidConds,
    StaticConds,
    PreConds,
    PostConds,
    TriggerConds,
    Goals,
    Necessities,
    Certainties,
}

impl SectionKind {
    pub const ALL: [SectionKind; 11] = [
        SectionKind::Episodes,
        SectionKind::EpisodeRelations,
        SectionKind::Types,
        SectionKind::RigidConds,
        SectionKind::StaticConds,
        SectionKind::PreConds,
        SectionKind::PostConds,
        SectionKind::TriggerConds,
        SectionKind::Goals,
        SectionKind::Necessities,
        SectionKind::Certainties,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            SectionKind::Episodes => ":episodes",
            SectionKind::EpisodeRelations => ":episode-relations",
            SectionKind::Types => ":types",
            SectionKind::RigidConds => ":rigid-conds",
            SectionKind::StaticConds => ":static-conds",
            SectionKind::PreConds => ":pre-conds",
            SectionKind::PostConds => ":post-conds",
            SectionKind::TriggerConds => ":trigger-conds",
            SectionKind::Goals => ":goals",
            SectionKind::Necessities => ":necessities",
            SectionKind::Certainties => ":certainties",
        }
    }

    pub fn from_keyword(kw: &str) -> Option<Self> {
        SectionKind::ALL.into_iter().find(|k| k.keyword().eq_ignore_ascii_case(kw))
    }

    /// Sections holding conditions that necessities may refer to.
    pub fn is_condition(self) -> bool {
        matches!(
            self,
            SectionKind::Types
                | SectionKind::RigidConds
                | SectionKind::StaticConds
                | SectionKind::PreConds
                | SectionKind::PostConds
                | SectionKind::TriggerConds
                | SectionKind::Goals
        )
    }

    fn is_valued(self) -> bool {
        matches!(self, SectionKind::Necessities | SectionKind::Certainties)
    }
}

impl fmt::Display for SectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaEntry {
    pub label: Variable,
    pub formula: Expr,
    /// Set for necessity and certainty entries.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelationKind {
    Sequential,
    Consec,
    SameTime,
    Before,
    After,
}

impl RelationKind {
    fn from_symbol(e: &Expr) -> Option<Self> {
        let s = e.as_symbol()?.as_str();
        Some(match s {
            "sequential" | "seq" => RelationKind::Sequential,
            "consec" => RelationKind::Consec,
            "same-time" => RelationKind::SameTime,
            "before" => RelationKind::Before,
            "after" => RelationKind::After,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeRelation {
    pub kind: RelationKind,
    pub left: Variable,
    pub right: Variable,
}

impl EpisodeRelation {
    /// Accepts `(?a before ?b)` and `(before ?a ?b)`.
    pub fn from_formula(e: &Expr) -> Option<Self> {
        let items = e.as_list()?;
        if items.len() != 3 {
            return None;
        }
        let (kind, left, right) = if let Some(k) = RelationKind::from_symbol(&items[1]) {
            (k, &items[0], &items[2])
        } else {
            (RelationKind::from_symbol(&items[0])?, &items[1], &items[2])
        };
        Some(EpisodeRelation {
            kind,
            left: left.as_variable()?.clone(),
            right: right.as_variable()?.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemaError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unknown section `{0}`")]
    UnknownSection(String),
    #[error("schema `{0}` has no episodes")]
    MissingEpisodes(String),
    #[error("{label} in {section}: value {value} outside [0,1]")]
    ValueOutOfRange { section: SectionKind, label: Variable, value: f64 },
    #[error("malformed schema: {0}")]
    Malformed(String),
    #[error("schema `{schema}` expects {expected} arguments, got {got}")]
    ArityMismatch { schema: String, expected: usize, got: usize },
    #[error("cyclic episode ordering involving {0}")]
    CyclicOrder(Variable),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub section: Option<String>,
    pub label: Option<String>,
    pub message: String,
}

impl Diagnostic {
    fn error(section: Option<SectionKind>, label: Option<&Variable>, message: String) -> Self {
        Diagnostic {
            severity: Severity::Error,
            section: section.map(|s| s.keyword().to_string()),
            label: label.map(|l| l.to_string()),
            message,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}")?;
        if let Some(s) = &self.section {
            write!(f, " [{s}")?;
            if let Some(l) = &self.label {
                write!(f, " {l}")?;
            }
            write!(f, "]")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialogueSchema {
    pub name: Symbol,
    /// `(<characterizing formula> ** ?e)`
    pub header: Expr,
    pub sections: BTreeMap<SectionKind, Vec<SchemaEntry>>,
    pub default_response: Option<Expr>,
    pub max_clarifications: Option<u32>,
}

pub const DEFAULT_PRECOND_NECESSITY: f64 = 1.0;
pub const DEFAULT_CONDITION_NECESSITY: f64 = 0.75;
pub const DEFAULT_ACTION_CERTAINTY: f64 = 1.0;
pub const DEFAULT_EXPECTATION_CERTAINTY: f64 = 0.75;

impl DialogueSchema {
    pub fn section(&self, kind: SectionKind) -> &[SchemaEntry] {
        self.sections.get(&kind).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn episodes(&self) -> &[SchemaEntry] {
        self.section(SectionKind::Episodes)
    }

    /// Characterizing formula of the head episode.
    pub fn header_formula(&self) -> &Expr {
        &self.header.as_list().expect("validated header")[0]
    }

    pub fn head_episode(&self) -> &Variable {
        self.header.as_list().expect("validated header")[2].as_variable().expect("validated header")
    }

    /// Header arguments, in order of first occurrence.
    pub fn header_params(&self) -> Vec<Variable> {
        let head = self.head_episode();
        self.header_formula().variables_in_order().into_iter().filter(|v| v != head).collect()
    }

    /// Action predicate that invokes this schema, e.g. `ask-about-test-results.v`.
    pub fn action_predicate(&self) -> Option<&Expr> {
        self.header_formula().predicate()
    }

    pub fn relations(&self) -> Vec<EpisodeRelation> {
        self.section(SectionKind::EpisodeRelations)
            .iter()
            .filter_map(|e| EpisodeRelation::from_formula(&e.formula))
            .collect()
    }

    fn labels(&self, pred: impl Fn(SectionKind) -> bool) -> BTreeSet<&Variable> {
        self.sections
            .iter()
            .filter(|(k, _)| pred(**k))
            .flat_map(|(_, es)| es.iter().map(|e| &e.label))
            .collect()
    }

    /// Parses and checks one schema form.
    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        Self::from_expr(&parse_expr(text)?)
    }

    pub fn from_expr(form: &Expr) -> Result<Self, SchemaError> {
        let items = form
            .as_list()
            .ok_or_else(|| SchemaError::Malformed("schema must be a list".into()))?;
        if items.len() < 2 || !items[0].is_symbol("dial-schema") {
            return Err(SchemaError::Malformed("expected (dial-schema <name> ...)".into()));
        }
        let name = items[1]
            .as_symbol()
            .cloned()
            .ok_or_else(|| SchemaError::Malformed("schema name must be a symbol".into()))?;
        let mut header = None;
        let mut sections: BTreeMap<SectionKind, Vec<SchemaEntry>> = BTreeMap::new();
        let mut default_response = None;
        let mut max_clarifications = None;

        let mut rest = items[2..].iter();
        while let Some(key) = rest.next() {
            let kw = key
                .as_symbol()
                .map(|s| s.as_str().to_string())
                .ok_or_else(|| SchemaError::Malformed(format!("expected section keyword, found `{key}`")))?;
            let value = rest
                .next()
                .ok_or_else(|| SchemaError::Malformed(format!("`{kw}` has no value")))?;
            match kw.as_str() {
                ":header" => header = Some(parse_header(value)?),
                ":default-response" => {
                    if value.as_words().is_none() {
                        return Err(SchemaError::Malformed(":default-response must be a quoted word list".into()));
                    }
                    default_response = Some(value.clone());
                }
                ":max-clarifications" => {
                    let n = value
                        .as_number()
                        .filter(|n| *n >= 0.0 && n.fract() == 0.0)
                        .ok_or_else(|| SchemaError::Malformed(":max-clarifications must be a nonnegative integer".into()))?;
                    max_clarifications = Some(n as u32);
                }
                other => {
                    let kind = SectionKind::from_keyword(other)
                        .ok_or_else(|| SchemaError::UnknownSection(other.to_string()))?;
                    let entries = parse_section(kind, value)?;
                    sections.entry(kind).or_default().extend(entries);
                }
            }
        }
        let header = header.ok_or_else(|| SchemaError::Malformed(format!("schema `{name}` has no :header")))?;
        if sections.get(&SectionKind::Episodes).is_none_or(|e| e.is_empty()) {
            return Err(SchemaError::MissingEpisodes(name.to_string()));
        }
        Ok(DialogueSchema { name, header, sections, default_response, max_clarifications })
    }

    /// Static checks; an empty result means the schema is well formed.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let episodes = self.labels(|k| k == SectionKind::Episodes);
        let conditions = self.labels(SectionKind::is_condition);
        let head = self.head_episode();
        let params: BTreeSet<Variable> = self.header_params().into_iter().collect();

        if self.episodes().is_empty() {
            out.push(Diagnostic::error(Some(SectionKind::Episodes), None, "no episodes declared".into()));
        }
        for (kind, entries) in &self.sections {
            let mut seen = BTreeSet::new();
            for e in entries {
                if !kind.is_valued() && !seen.insert(&e.label) {
                    out.push(Diagnostic::error(Some(*kind), Some(&e.label), "duplicate label".into()));
                }
                if let Some(v) = e.value {
                    if !(0.0..=1.0).contains(&v) {
                        out.push(Diagnostic::error(Some(*kind), Some(&e.label), format!("value {v} outside [0,1]")));
                    }
                }
            }
        }
        for e in self.section(SectionKind::Certainties) {
            if !episodes.contains(&e.label) {
                out.push(Diagnostic::error(
                    Some(SectionKind::Certainties),
                    Some(&e.label),
                    format!("certainty attached to undeclared episode {}", e.label),
                ));
            }
        }
        for e in self.section(SectionKind::Necessities) {
            if !conditions.contains(&e.label) {
                out.push(Diagnostic::error(
                    Some(SectionKind::Necessities),
                    Some(&e.label),
                    format!("necessity attached to undeclared condition {}", e.label),
                ));
            }
        }
        for e in self.section(SectionKind::EpisodeRelations) {
            match EpisodeRelation::from_formula(&e.formula) {
                None => out.push(Diagnostic::error(
                    Some(SectionKind::EpisodeRelations),
                    Some(&e.label),
                    format!("unrecognized relation `{}`", e.formula),
                )),
                Some(r) => {
                    for v in [&r.left, &r.right] {
                        if !episodes.contains(v) {
                            out.push(Diagnostic::error(
                                Some(SectionKind::EpisodeRelations),
                                Some(&e.label),
                                format!("relation mentions undeclared episode {v}"),
                            ));
                        }
                    }
                }
            }
        }
        for e in self.section(SectionKind::Goals) {
            for v in e.formula.free_variables() {
                if &v != head && !params.contains(&v) && !episodes.contains(&v) {
                    out.push(Diagnostic::error(
                        Some(SectionKind::Goals),
                        Some(&e.label),
                        format!("goal mentions undeclared episode {v}"),
                    ));
                }
            }
        }
        for e in self.episodes() {
            if let Some(items) = e.formula.as_list() {
                if items[0].is_symbol("repeat-until") && items.len() != 3 {
                    out.push(Diagnostic::error(
                        Some(SectionKind::Episodes),
                        Some(&e.label),
                        "repeat-until takes a condition and one episode formula".into(),
                    ));
                }
            }
        }
        if out.is_empty() {
            if let Err(SchemaError::CyclicOrder(v)) = self.episode_order() {
                out.push(Diagnostic::error(
                    Some(SectionKind::EpisodeRelations),
                    Some(&v),
                    "episode relations induce a cyclic order".into(),
                ));
            }
        }
        out
    }

    /// Partial order over episodes: declaration order by default, refined by
    /// the episode relations.
    pub fn episode_order(&self) -> Result<EpisodeOrder, SchemaError> {
        EpisodeOrder::build(self)
    }

    /// Binds the header arguments and participants, producing a fresh instance.
    pub fn instantiate(
        self: &Arc<Self>,
        args: &[Expr],
        me: &Expr,
        you: &Expr,
        ids: &mut InstanceIds,
    ) -> Result<SchemaInstance, SchemaError> {
        let params = self.header_params();
        if params.len() != args.len() {
            return Err(SchemaError::ArityMismatch {
                schema: self.name.to_string(),
                expected: params.len(),
                got: args.len(),
            });
        }
        let bindings: Bindings = params.into_iter().zip(args.iter().cloned()).collect();
        let fix = |e: &Expr| substitute(&e.resolve_indexicals(me, you), &bindings);
        let sections = self
            .sections
            .iter()
            .map(|(k, es)| {
                let es = es
                    .iter()
                    .map(|e| SchemaEntry { label: e.label.clone(), formula: fix(&e.formula), value: e.value })
                    .collect();
                (*k, es)
            })
            .collect();
        let default_response = self.default_response.as_ref().map(fix);
        Ok(SchemaInstance {
            id: ids.allocate(),
            schema: Arc::clone(self),
            header: fix(&self.header),
            bindings,
            me: me.clone(),
            you: you.clone(),
            sections,
            default_response,
        })
    }
}

fn parse_header(value: &Expr) -> Result<Expr, SchemaError> {
    let ok = value.as_list().is_some_and(|items| {
        items.len() == 3 && items[1].is_symbol("**") && items[2].as_variable().is_some() && items[0].as_list().is_some()
    });
    if ok {
        Ok(value.clone())
    } else {
        Err(SchemaError::Malformed(format!("header must be (<formula> ** ?e), found `{value}`")))
    }
}

fn parse_section(kind: SectionKind, value: &Expr) -> Result<Vec<SchemaEntry>, SchemaError> {
    let items = value
        .as_list()
        .ok_or_else(|| SchemaError::Malformed(format!("{kind} must be a list of label/formula pairs")))?;
    if items.len() % 2 != 0 {
        return Err(SchemaError::Malformed(format!("{kind} has an odd number of items")));
    }
    let mut out = Vec::new();
    for pair in items.chunks(2) {
        let label = pair[0]
            .as_variable()
            .cloned()
            .ok_or_else(|| SchemaError::Malformed(format!("{kind}: expected a ?label, found `{}`", pair[0])))?;
        let formula = pair[1].clone();
        let value = if kind.is_valued() {
            let v = formula
                .as_number()
                .ok_or_else(|| SchemaError::Malformed(format!("{kind}: {label} needs a numeric value")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(SchemaError::ValueOutOfRange { section: kind, label, value: v });
            }
            Some(v)
        } else {
            None
        };
        out.push(SchemaEntry { label, formula, value });
    }
    Ok(out)
}

/// Session-local instance id source.
#[derive(Debug, Clone, Default)]
pub struct InstanceIds(u64);

impl InstanceIds {
    pub fn allocate(&mut self) -> u64 {
        self.0 += 1;
        self.0
    }
}

/// A schema with participants and header arguments fixed. Episode variables
/// stay free until the planner matches or executes them.
#[derive(Debug, Clone)]
pub struct SchemaInstance {
    pub id: u64,
    pub schema: Arc<DialogueSchema>,
    pub header: Expr,
    pub bindings: Bindings,
    pub me: Expr,
    pub you: Expr,
    pub sections: BTreeMap<SectionKind, Vec<SchemaEntry>>,
    pub default_response: Option<Expr>,
}

impl SchemaInstance {
    pub fn name(&self) -> &Symbol {
        &self.schema.name
    }

    pub fn section(&self, kind: SectionKind) -> &[SchemaEntry] {
        self.sections.get(&kind).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn episodes(&self) -> &[SchemaEntry] {
        self.section(SectionKind::Episodes)
    }

    pub fn goals(&self) -> &[SchemaEntry] {
        self.section(SectionKind::Goals)
    }

    pub fn episode(&self, label: &Variable) -> Option<&SchemaEntry> {
        self.episodes().iter().find(|e| &e.label == label)
    }

    fn explicit_value(&self, kind: SectionKind, label: &Variable) -> Option<f64> {
        self.section(kind).iter().find(|e| &e.label == label).and_then(|e| e.value)
    }

    /// Certainty of an episode, defaulting by who performs it.
    pub fn certainty(&self, label: &Variable) -> f64 {
        self.explicit_value(SectionKind::Certainties, label).unwrap_or_else(|| {
            let by_me = self
                .episode(label)
                .and_then(|e| e.formula.as_list())
                .is_some_and(|items| items[0] == self.me);
            if by_me {
                DEFAULT_ACTION_CERTAINTY
            } else {
                DEFAULT_EXPECTATION_CERTAINTY
            }
        })
    }

    /// Necessity of a condition, defaulting to 1 for pre-conds.
    pub fn necessity(&self, label: &Variable) -> f64 {
        self.explicit_value(SectionKind::Necessities, label).unwrap_or_else(|| {
            if self.section(SectionKind::PreConds).iter().any(|e| &e.label == label) {
                DEFAULT_PRECOND_NECESSITY
            } else {
                DEFAULT_CONDITION_NECESSITY
            }
        })
    }
}

/// Partial order over episode variables. Same-time episodes share a group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeOrder {
    pub groups: Vec<Vec<Variable>>,
    /// Direct edges between group indices.
    pub edges: BTreeSet<(usize, usize)>,
    /// Group pairs that must be adjacent in any linearization.
    pub consecutive: BTreeSet<(usize, usize)>,
    group_of: HashMap<Variable, usize>,
}

impl EpisodeOrder {
    fn build(schema: &DialogueSchema) -> Result<Self, SchemaError> {
        let labels: Vec<Variable> = schema.episodes().iter().map(|e| e.label.clone()).collect();
        let relations = schema.relations();

        // union-find over same-time relations
        let mut parent: Vec<usize> = (0..labels.len()).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            p[i] = r;
            r
        }
        let idx = |v: &Variable| labels.iter().position(|l| l == v);
        for r in relations.iter().filter(|r| r.kind == RelationKind::SameTime) {
            if let (Some(a), Some(b)) = (idx(&r.left), idx(&r.right)) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                let (lo, hi) = (ra.min(rb), ra.max(rb));
                parent[hi] = lo;
            }
        }
        let mut groups: Vec<Vec<Variable>> = Vec::new();
        let mut root_group: HashMap<usize, usize> = HashMap::new();
        let mut group_of = HashMap::new();
        for (i, l) in labels.iter().enumerate() {
            let root = find(&mut parent, i);
            let g = *root_group.entry(root).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(l.clone());
            group_of.insert(l.clone(), g);
        }

        let mut edges = BTreeSet::new();
        let mut consecutive = BTreeSet::new();
        for r in &relations {
            let (Some(&a), Some(&b)) = (group_of.get(&r.left), group_of.get(&r.right)) else { continue };
            let edge = match r.kind {
                RelationKind::SameTime => continue,
                RelationKind::After => (b, a),
                RelationKind::Consec => {
                    consecutive.insert((a, b));
                    (a, b)
                }
                RelationKind::Sequential | RelationKind::Before => (a, b),
            };
            if edge.0 == edge.1 {
                return Err(SchemaError::CyclicOrder(r.left.clone()));
            }
            edges.insert(edge);
        }
        let mut order = EpisodeOrder { groups, edges, consecutive, group_of };
        if let Some(g) = order.find_cycle() {
            return Err(SchemaError::CyclicOrder(order.groups[g][0].clone()));
        }
        // Default sequential chain over units (groups glued by consec), unless an
        // explicit path already orders the pair the other way.
        let n = order.groups.len();
        let consec_next = |g: usize| order.consecutive.iter().find(|(a, _)| *a == g).map(|(_, b)| *b);
        let is_target = |g: usize| order.consecutive.iter().any(|(_, b)| *b == g);
        let mut in_unit = vec![false; n];
        let mut units: Vec<Vec<usize>> = Vec::new();
        for g in 0..n {
            if in_unit[g] || is_target(g) {
                continue;
            }
            let mut unit = vec![g];
            in_unit[g] = true;
            let mut cur = g;
            while let Some(next) = consec_next(cur).filter(|&x| !in_unit[x]) {
                in_unit[next] = true;
                unit.push(next);
                cur = next;
            }
            units.push(unit);
        }
        for (g, _) in in_unit.iter().enumerate().filter(|(_, inside)| !**inside) {
            units.push(vec![g]);
        }
        units.sort_by_key(|u| u[0]);
        for pair in units.windows(2) {
            let (a, b) = (*pair[0].last().expect("nonempty unit"), pair[1][0]);
            if !order.reaches(b, a) {
                order.edges.insert((a, b));
            }
        }
        Ok(order)
    }

    fn successors(&self, g: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |(a, _)| *a == g).map(|(_, b)| *b)
    }

    fn reaches(&self, from: usize, to: usize) -> bool {
        let mut stack = vec![from];
        let mut seen = BTreeSet::new();
        while let Some(g) = stack.pop() {
            if g == to {
                return true;
            }
            if seen.insert(g) {
                stack.extend(self.successors(g));
            }
        }
        false
    }

    fn find_cycle(&self) -> Option<usize> {
        (0..self.groups.len()).find(|&g| self.successors(g).any(|s| self.reaches(s, g)))
    }

    pub fn group_of(&self, v: &Variable) -> Option<usize> {
        self.group_of.get(v).copied()
    }

    /// Strict precedence between two episodes.
    pub fn precedes(&self, a: &Variable, b: &Variable) -> bool {
        match (self.group_of(a), self.group_of(b)) {
            (Some(ga), Some(gb)) if ga != gb => self.reaches(ga, gb),
            _ => false,
        }
    }

    /// Topological order with declaration order breaking ties; consecutive
    /// pairs are kept adjacent.
    pub fn linear(&self) -> Vec<Variable> {
        let n = self.groups.len();
        let mut indegree = vec![0usize; n];
        for &(_, b) in &self.edges {
            indegree[b] += 1;
        }
        let mut placed = vec![false; n];
        let mut out_groups = Vec::with_capacity(n);
        let mut forced: Option<usize> = None;
        while out_groups.len() < n {
            let next = forced
                .take()
                .filter(|&g| !placed[g] && indegree[g] == 0)
                .or_else(|| (0..n).find(|&g| !placed[g] && indegree[g] == 0))
                .expect("acyclic order");
            placed[next] = true;
            out_groups.push(next);
            for s in self.successors(next).collect::<Vec<_>>() {
                indegree[s] -= 1;
            }
            forced = self.consecutive.iter().find(|(a, _)| *a == next).map(|(_, b)| *b);
        }
        out_groups.into_iter().flat_map(|g| self.groups[g].iter().cloned()).collect()
    }
}
