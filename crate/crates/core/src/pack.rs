//! Persona packs: a directory of schemas, trees, a feature lexicon and
//! background facts, described by a `pack.manifest`.
//!
//! ```text
//! (pack sophie
//!   :me sophie :you doctor
//!   :top-level sophie-visit
//!   :lexicon "features.lex"
//!   :facts "kb.facts"
//!   :schemas "schemas/top.schema schemas/topics.schema"
//!   :trees "trees/interpret.tree trees/react.tree"
//!   :clarifications ("i'm sorry , could you say that in a different way ?")
//!   :corpus "tests/interpret.tsv")
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::el::{parse_all_spanned, parse_expr, Expr, Symbol};
use crate::facts::load_facts;
use crate::interpret::{extract_gist, topic_of, GistClause, GENERAL_TREE};
use crate::schema::{DialogueSchema, Severity};
use crate::transduction::{
    parse_tree_file, tokenize, Directive, FeatureLexicon, PatternNode, TransductionTree, TreeSet,
};

pub const MANIFEST: &str = "pack.manifest";

/// Action predicates the session performs itself.
pub const PRIMITIVE_ACTIONS: &[&str] = &["say-to.v", "paraphrase-to.v", "react-to.v", "query.v", "store.v"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PackDiagnostic {
    pub severity: Severity,
    pub file: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl PackDiagnostic {
    fn error(file: Option<&str>, line: Option<usize>, message: impl Into<String>) -> Self {
        PackDiagnostic { severity: Severity::Error, file: file.map(String::from), line, message: message.into() }
    }

    fn warning(file: Option<&str>, line: Option<usize>, message: impl Into<String>) -> Self {
        PackDiagnostic { severity: Severity::Warning, file: file.map(String::from), line, message: message.into() }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for PackDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.file, self.line) {
            (Some(file), Some(line)) => write!(f, "{file}:{line}: ")?,
            (Some(file), None) => write!(f, "{file}: ")?,
            _ => {}
        }
        let sev = if self.is_error() { "error" } else { "warning" };
        write!(f, "{sev}: {}", self.message)
    }
}

/// One line of the interpretation test corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub line: usize,
    pub prev_gist: Option<Vec<String>>,
    pub input: String,
    pub expected_gist: Vec<String>,
    pub expected_topic: Symbol,
}

#[derive(Debug, Clone)]
pub struct Pack {
    pub name: String,
    pub root: PathBuf,
    pub me: Expr,
    pub you: Expr,
    pub top_level: Symbol,
    pub schemas: BTreeMap<Symbol, Arc<DialogueSchema>>,
    pub trees: TreeSet,
    pub kb: Vec<Expr>,
    pub clarifications: Vec<String>,
    pub corpus: Vec<CorpusEntry>,
}

#[derive(Debug, Clone, Default)]
struct Manifest {
    name: String,
    me: Option<Expr>,
    you: Option<Expr>,
    top_level: Option<Symbol>,
    lexicon: Option<String>,
    facts: Option<String>,
    schemas: Vec<String>,
    trees: Vec<String>,
    clarifications: Vec<String>,
    corpus: Option<String>,
}

fn words_text(e: &Expr) -> Option<String> {
    e.as_words().map(|ws| ws.iter().map(|w| w.text()).collect::<Vec<_>>().join(" "))
}

fn read_manifest(text: &str, diags: &mut Vec<PackDiagnostic>) -> Option<Manifest> {
    let file = Some(MANIFEST);
    let form = match parse_expr(text) {
        Ok(f) => f,
        Err(e) => {
            diags.push(PackDiagnostic::error(file, Some(e.pos().line), e.to_string()));
            return None;
        }
    };
    let items = form.as_list().filter(|i| i.len() >= 2 && i[0].is_symbol("pack"));
    let Some(items) = items else {
        diags.push(PackDiagnostic::error(file, Some(1), "expected (pack NAME :key value ...)"));
        return None;
    };
    let mut m = Manifest { name: items[1].to_string(), ..Manifest::default() };
    let mut rest = items[2..].iter();
    while let Some(key) = rest.next() {
        let Some(value) = rest.next() else {
            diags.push(PackDiagnostic::error(file, None, format!("`{key}` has no value")));
            break;
        };
        let paths = || words_text(value).map(|t| t.split_whitespace().map(String::from).collect::<Vec<_>>());
        let key = key.to_string();
        match key.as_str() {
            ":me" => m.me = Some(value.clone()),
            ":you" => m.you = Some(value.clone()),
            ":top-level" => m.top_level = value.as_symbol().cloned(),
            ":lexicon" => m.lexicon = words_text(value),
            ":facts" => m.facts = words_text(value),
            ":corpus" => m.corpus = words_text(value),
            ":schemas" => m.schemas = paths().unwrap_or_default(),
            ":trees" => m.trees = paths().unwrap_or_default(),
            ":clarifications" => {
                m.clarifications = value.as_list().unwrap_or(&[]).iter().filter_map(words_text).map(|t| t.to_lowercase()).collect()
            }
            other => diags.push(PackDiagnostic::warning(file, None, format!("unknown manifest key `{other}`"))),
        }
    }
    for (present, what) in [
        (m.me.is_some(), ":me"),
        (m.you.is_some(), ":you"),
        (m.top_level.is_some(), ":top-level"),
        (!m.schemas.is_empty(), ":schemas"),
        (!m.trees.is_empty(), ":trees"),
    ] {
        if !present {
            diags.push(PackDiagnostic::error(file, None, format!("manifest is missing {what}")));
        }
    }
    Some(m)
}

fn read_file(root: &Path, rel: &str, diags: &mut Vec<PackDiagnostic>) -> Option<String> {
    match fs::read_to_string(root.join(rel)) {
        Ok(t) => Some(t),
        Err(e) => {
            diags.push(PackDiagnostic::error(Some(rel), None, format!("cannot read: {e}")));
            None
        }
    }
}

fn parse_corpus(text: &str, file: &str, diags: &mut Vec<PackDiagnostic>) -> Vec<CorpusEntry> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            diags.push(PackDiagnostic::error(Some(file), Some(i + 1), "expected 4 tab-separated columns"));
            continue;
        }
        let prev = cols[0].trim();
        out.push(CorpusEntry {
            line: i + 1,
            prev_gist: (prev != "-" && !prev.is_empty()).then(|| tokenize(prev)),
            input: cols[1].to_string(),
            expected_gist: tokenize(cols[2]),
            expected_topic: Symbol::new(cols[3].trim()),
        });
    }
    out
}

/// Loads and validates a pack. Diagnostics include warnings even on success.
pub fn validate_pack(root: &Path) -> (Option<Pack>, Vec<PackDiagnostic>) {
    let mut diags = Vec::new();
    let Some(text) = read_file(root, MANIFEST, &mut diags) else {
        return (None, diags);
    };
    let Some(m) = read_manifest(&text, &mut diags) else {
        return (None, diags);
    };

    let lexicon = match &m.lexicon {
        Some(rel) => read_file(root, rel, &mut diags)
            .map(|t| {
                FeatureLexicon::parse(&t).unwrap_or_else(|e| {
                    diags.push(PackDiagnostic::error(Some(rel), Some(e.line), e.message));
                    FeatureLexicon::new()
                })
            })
            .unwrap_or_default(),
        None => FeatureLexicon::new(),
    };

    let mut schemas: BTreeMap<Symbol, Arc<DialogueSchema>> = BTreeMap::new();
    let mut schema_lines: BTreeMap<Symbol, (String, usize)> = BTreeMap::new();
    for rel in &m.schemas {
        let Some(text) = read_file(root, rel, &mut diags) else { continue };
        let forms = match parse_all_spanned(&text) {
            Ok(f) => f,
            Err(e) => {
                diags.push(PackDiagnostic::error(Some(rel), Some(e.pos().line), e.to_string()));
                continue;
            }
        };
        for form in forms {
            let line = form.pos.line;
            match DialogueSchema::from_expr(&form.expr) {
                Ok(s) => {
                    for d in s.validate() {
                        diags.push(PackDiagnostic {
                            severity: d.severity.clone(),
                            file: Some(rel.clone()),
                            line: Some(line),
                            message: format!("{}: {d}", s.name),
                        });
                    }
                    if schemas.contains_key(&s.name) {
                        diags.push(PackDiagnostic::error(Some(rel), Some(line), format!("duplicate schema `{}`", s.name)));
                        continue;
                    }
                    schema_lines.insert(s.name.clone(), (rel.clone(), line));
                    schemas.insert(s.name.clone(), Arc::new(s));
                }
                Err(e) => diags.push(PackDiagnostic::error(Some(rel), Some(line), e.to_string())),
            }
        }
    }

    let mut trees: Vec<TransductionTree> = Vec::new();
    for rel in &m.trees {
        let Some(text) = read_file(root, rel, &mut diags) else { continue };
        match parse_tree_file(&text, Some(rel)) {
            Ok(ts) => trees.extend(ts),
            Err(e) => diags.push(PackDiagnostic::error(e.file.as_deref(), Some(e.pos.line), e.kind.to_string())),
        }
    }
    for t in &trees {
        for node in &t.roots {
            check_schema_refs(node, t, &schemas, &mut diags);
        }
    }
    let tree_set = match TreeSet::new(trees, lexicon) {
        Ok(s) => Some(s),
        Err(errs) => {
            for e in errs {
                diags.push(PackDiagnostic::error(e.file.as_deref(), Some(e.pos.line), e.kind.to_string()));
            }
            None
        }
    };
    if let Some(ts) = &tree_set {
        if !ts.contains(GENERAL_TREE) {
            diags.push(PackDiagnostic::error(None, None, format!("pack defines no `{GENERAL_TREE}` tree")));
        }
    }

    if let Some(top) = &m.top_level {
        if !schemas.contains_key(top) {
            diags.push(PackDiagnostic::error(Some(MANIFEST), None, format!("top-level schema `{top}` is not defined")));
        }
    }
    check_actions(&schemas, &schema_lines, &mut diags);

    let kb = match &m.facts {
        Some(rel) => match read_file(root, rel, &mut diags).map(|t| load_facts(&t)) {
            Some(Ok(f)) => f,
            Some(Err(e)) => {
                diags.push(PackDiagnostic::error(Some(rel), None, e.to_string()));
                Vec::new()
            }
            None => Vec::new(),
        },
        None => Vec::new(),
    };
    let corpus = match &m.corpus {
        Some(rel) => read_file(root, rel, &mut diags).map(|t| parse_corpus(&t, rel, &mut diags)).unwrap_or_default(),
        None => Vec::new(),
    };

    if diags.iter().any(PackDiagnostic::is_error) {
        return (None, diags);
    }
    let pack = Pack {
        name: m.name,
        root: root.to_path_buf(),
        me: m.me.expect("checked"),
        you: m.you.expect("checked"),
        top_level: m.top_level.expect("checked"),
        schemas,
        trees: tree_set.expect("checked"),
        kb,
        clarifications: m.clarifications,
        corpus,
    };
    (Some(pack), diags)
}

/// Loads a pack, failing with every error diagnostic.
pub fn load_pack(root: &Path) -> Result<Pack, Vec<PackDiagnostic>> {
    match validate_pack(root) {
        (Some(p), _) => Ok(p),
        (None, diags) => Err(diags.into_iter().filter(PackDiagnostic::is_error).collect()),
    }
}

fn check_schema_refs(
    node: &PatternNode,
    tree: &TransductionTree,
    schemas: &BTreeMap<Symbol, Arc<DialogueSchema>>,
    diags: &mut Vec<PackDiagnostic>,
) {
    if let Some(Directive::Schema(name)) = &node.directive {
        if !schemas.contains_key(name) {
            diags.push(PackDiagnostic::error(
                tree.file.as_deref(),
                Some(node.pos.line),
                format!("tree `{}` selects unknown schema `{name}`", tree.name),
            ));
        }
    }
    for c in &node.children {
        check_schema_refs(c, tree, schemas, diags);
    }
}

/// Warns about system actions that are neither primitive nor a schema.
fn check_actions(
    schemas: &BTreeMap<Symbol, Arc<DialogueSchema>>,
    lines: &BTreeMap<Symbol, (String, usize)>,
    diags: &mut Vec<PackDiagnostic>,
) {
    let invokable: Vec<&Expr> = schemas.values().filter_map(|s| s.action_predicate()).collect();
    for (name, s) in schemas {
        let (file, line) = &lines[name];
        for e in s.episodes() {
            let Some(items) = e.formula.as_list() else { continue };
            if items.len() < 2 || !matches!(items[0], Expr::Indexical(crate::el::Indexical::Me)) {
                continue;
            }
            let pred = &items[1];
            let primitive = pred.as_symbol().is_some_and(|p| PRIMITIVE_ACTIONS.contains(&p.as_str()));
            if !primitive && !invokable.contains(&pred) {
                diags.push(PackDiagnostic::warning(
                    Some(file),
                    Some(*line),
                    format!("{name}: {} uses action `{pred}` that no schema or primitive provides", e.label),
                ));
            }
        }
    }
}

/// A corpus line whose interpretation differs from the expectation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusMismatch {
    pub line: usize,
    pub message: String,
}

impl Pack {
    /// Runs every corpus line through interpretation.
    pub fn check_corpus(&self) -> Vec<CorpusMismatch> {
        let mut out = Vec::new();
        for c in &self.corpus {
            let prev = c.prev_gist.as_ref().map(|w| {
                let topic = topic_of(&self.trees, w).unwrap_or_else(|| Symbol::new("general"));
                GistClause::new(w.clone(), topic)
            });
            let got = extract_gist(&self.trees, &tokenize(&c.input), prev.as_ref());
            match got.gists.first() {
                Some(g) if g.words == c.expected_gist && g.topic == c.expected_topic => {}
                Some(g) => out.push(CorpusMismatch {
                    line: c.line,
                    message: format!("got `{}` [{}], expected `{}` [{}]", g.text(), g.topic, c.expected_gist.join(" "), c.expected_topic),
                }),
                None => out.push(CorpusMismatch { line: c.line, message: "no gist extracted".into() }),
            }
        }
        out
    }

    pub fn schema(&self, name: &Symbol) -> Option<&Arc<DialogueSchema>> {
        self.schemas.get(name)
    }
}

/// One expectation from a tree test file: `tree<TAB>input<TAB>kind<TAB>output`.
/// `kind` is a directive kind or `none` for no match.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeTest {
    pub line: usize,
    pub tree: String,
    pub input: String,
    pub kind: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeTestFailure {
    pub line: usize,
    pub message: String,
}

pub fn parse_tree_tests(text: &str) -> Result<Vec<TreeTest>, TreeTestFailure> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(TreeTestFailure { line: i + 1, message: "expected 4 tab-separated columns".into() });
        }
        out.push(TreeTest {
            line: i + 1,
            tree: cols[0].trim().to_string(),
            input: cols[1].to_string(),
            kind: cols[2].trim().to_lowercase(),
            output: tokenize(cols[3]).join(" "),
        });
    }
    Ok(out)
}

/// Runs tree tests; an empty result means all passed.
pub fn run_tree_tests(trees: &TreeSet, tests: &[TreeTest]) -> Vec<TreeTestFailure> {
    let mut out = Vec::new();
    for t in tests {
        if !trees.contains(&t.tree) {
            out.push(TreeTestFailure { line: t.line, message: format!("no tree named `{}`", t.tree) });
            continue;
        }
        let got = trees.transduce(&t.tree, &tokenize(&t.input));
        let (kind, output) = match &got {
            Some(r) => (r.result.kind().to_string(), tokenize(&r.result.render()).join(" ")),
            None => ("none".to_string(), String::new()),
        };
        if kind != t.kind || output != t.output {
            let path = got.map(|g| g.trace.join(" ")).unwrap_or_default();
            out.push(TreeTestFailure {
                line: t.line,
                message: format!("expected {} `{}`, got {kind} `{output}` {path}", t.kind, t.output),
            });
        }
    }
    out
}
