//! Two-level interpretation of user input: gist clauses via context-selected
//! interpretation trees, then optional logical forms via the `ulf` tree.

use serde::{Deserialize, Serialize};

use crate::el::{Expr, Symbol};
use crate::facts::FactStore;
use crate::transduction::{DirectiveResult, TreeSet};

pub const GENERAL_TREE: &str = "interpret.general";
pub const ULF_TREE: &str = "ulf";

/// A context-independent restatement of part of an utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GistClause {
    pub words: Vec<String>,
    pub topic: Symbol,
    /// The user words the clause was extracted from.
    pub source: Vec<String>,
}

impl GistClause {
    pub fn new(words: Vec<String>, topic: Symbol) -> Self {
        GistClause { source: words.clone(), words, topic }
    }

    pub fn text(&self) -> String {
        self.words.join(" ")
    }

    pub fn is_question(&self) -> bool {
        self.words.last().is_some_and(|w| w == "?")
    }
}

/// Everything extracted from one utterance.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Interpretation {
    pub gists: Vec<GistClause>,
    /// Topic schemas requested by interpretation trees.
    pub schema_requests: Vec<Symbol>,
    /// One node path per segment that produced something.
    pub traces: Vec<Vec<String>>,
}

/// Splits tokenized input after each `.`, `?` or `!`.
pub fn segment(words: &[String]) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    for w in words {
        current.push(w.clone());
        if matches!(w.as_str(), "." | "?" | "!") {
            out.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out.retain(|seg| seg.iter().any(|w| !matches!(w.as_str(), "." | "?" | "!" | ",")));
    out
}

/// Name of the interpretation tree used after a system gist of `topic`.
pub fn context_tree_name(trees: &TreeSet, topic: Option<&Symbol>) -> String {
    topic
        .map(|t| format!("interpret.{t}"))
        .filter(|name| trees.contains(name))
        .unwrap_or_else(|| GENERAL_TREE.to_string())
}

/// The topic the general tree assigns to `words`, if any.
pub fn topic_of(trees: &TreeSet, words: &[String]) -> Option<Symbol> {
    match trees.transduce(GENERAL_TREE, words)?.result {
        DirectiveResult::Gist { topic, .. } => Some(topic),
        _ => None,
    }
}

/// Extracts gist clauses segment by segment, in utterance order.
pub fn extract_gist(trees: &TreeSet, words: &[String], prev_system_gist: Option<&GistClause>) -> Interpretation {
    let context = context_tree_name(trees, prev_system_gist.map(|g| &g.topic));
    let mut out = Interpretation::default();
    for seg in segment(words) {
        let mut attempt = trees.transduce(&context, &seg);
        if context != GENERAL_TREE && !matches!(attempt.as_ref().map(|t| &t.result), Some(DirectiveResult::Gist { .. } | DirectiveResult::Schema { .. })) {
            attempt = trees.transduce(GENERAL_TREE, &seg);
        }
        let Some(t) = attempt else { continue };
        match t.result {
            DirectiveResult::Gist { topic, words } => {
                out.gists.push(GistClause { words, topic, source: seg });
                out.traces.push(t.trace);
            }
            DirectiveResult::Schema { name } => {
                out.schema_requests.push(name);
                out.traces.push(t.trace);
            }
            _ => {}
        }
    }
    out
}

/// Builds a logical form for a gist clause with the `ulf` tree.
/// Forms that still contain variables are rejected.
pub fn gist_to_ulf(trees: &TreeSet, gist: &GistClause) -> Option<Expr> {
    match trees.transduce(ULF_TREE, &gist.words)?.result {
        DirectiveResult::Ulf { ulf } if ulf.free_variables().is_empty() => Some(ulf),
        _ => None,
    }
}

/// Pronoun placeholders and the entities they may refer to.
fn compatible(pronoun: &str, candidate: &Symbol) -> bool {
    let name = candidate.as_str();
    match pronoun {
        "it.pro" => name.ends_with(".n"),
        "they.pro" | "them.pro" => name.ends_with(".n") || name.ends_with(".pl"),
        "he.pro" | "she.pro" | "him.pro" | "her.pro" => !name.contains('.'),
        _ => false,
    }
}

fn is_placeholder(s: &Symbol) -> bool {
    matches!(s.as_str(), "it.pro" | "they.pro" | "them.pro" | "he.pro" | "she.pro" | "him.pro" | "her.pro")
}

fn entity_symbols(e: &Expr, out: &mut Vec<Symbol>) {
    match e {
        Expr::Symbol(s) => out.push(s.clone()),
        Expr::List(items) => {
            for i in items {
                entity_symbols(i, out);
            }
        }
        _ => {}
    }
}

/// Replaces each pronoun placeholder by the most recently mentioned
/// compatible entity in context. Placeholders without a candidate stay.
pub fn resolve_references(ulf: &Expr, store: &FactStore) -> Expr {
    match ulf {
        Expr::Symbol(s) if is_placeholder(s) => {
            for entry in store.context_by_recency() {
                let mut syms = Vec::new();
                entity_symbols(&entry.fact, &mut syms);
                let predicate = entry.fact.predicate().and_then(Expr::as_symbol);
                if let Some(found) = syms
                    .into_iter()
                    .rev()
                    .find(|c| Some(c) != predicate && !is_placeholder(c) && compatible(s.as_str(), c))
                {
                    return Expr::Symbol(found);
                }
            }
            ulf.clone()
        }
        Expr::List(items) => Expr::List(items.iter().map(|i| resolve_references(i, store)).collect()),
        other => other.clone(),
    }
}
