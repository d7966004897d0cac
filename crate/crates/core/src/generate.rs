//! Response selection: reactions to user gists, paraphrases of system gists,
//! and the clarification/default fallbacks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::el::Symbol;
use crate::interpret::GistClause;
use crate::transduction::{Transduction, TreeSet};

pub const REACT_GENERAL: &str = "react.general";
/// Separates system gist words from the previous user gist in paraphrase input.
pub const PARAPHRASE_SEPARATOR: &str = "//";
/// Template word replaced by the previous system output.
pub const LAST_OUTPUT: &str = "$last";
pub const DEFAULT_MAX_CLARIFICATIONS: usize = 2;

/// Used when no schema in scope provides a default response.
pub const GENERIC_DEFAULT: &str = "i see . let's keep going .";

pub const DEFAULT_CLARIFICATIONS: &[&str] = &[
    "i'm sorry , could you say that in a different way ?",
    "sorry , i didn't quite catch that . could you rephrase it ?",
    "i'm not sure i follow . what do you mean ?",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    /// A line written into a schema.
    Scripted,
    Reaction,
    Paraphrase,
    Clarification,
    SchemaDefault,
}

/// One system output with where it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponsePlanItem {
    pub kind: ResponseKind,
    pub words: Vec<String>,
    /// Tree node paths, or a `fallback:` rule id.
    pub provenance: Vec<String>,
}

impl ResponsePlanItem {
    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

/// Reaction tree for `topic`, falling back to the general one.
pub fn select_reaction(trees: &TreeSet, gist: &GistClause) -> Option<Transduction> {
    let specific = format!("react.{}", gist.topic);
    if trees.contains(&specific) {
        if let Some(t) = trees.transduce(&specific, &gist.words) {
            return Some(t);
        }
    }
    trees.transduce(REACT_GENERAL, &gist.words)
}

/// Replaces `$last` with the previous output.
pub fn expand_last(words: &[String], last: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(words.len());
    for w in words {
        if w == LAST_OUTPUT {
            out.extend(last.iter().cloned());
        } else {
            out.push(w.clone());
        }
    }
    out
}

/// Per-topic variant counters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParaphraseCounters(BTreeMap<String, usize>);

/// Picks a surface form for a system gist. Matching variants are used in
/// turn, so repeated calls on the same topic rotate through them.
pub fn paraphrase(
    trees: &TreeSet,
    system_gist: &GistClause,
    prev_user_gist: Option<&GistClause>,
    counters: &mut ParaphraseCounters,
) -> ResponsePlanItem {
    let tree = format!("paraphrase.{}", system_gist.topic);
    let mut input = system_gist.words.clone();
    input.push(PARAPHRASE_SEPARATOR.to_string());
    if let Some(u) = prev_user_gist {
        input.extend(u.words.iter().cloned());
    }
    let variants: Vec<Transduction> = trees
        .transduce_all(&tree, &input)
        .into_iter()
        .filter(|t| !t.result.render().is_empty())
        .collect();
    if variants.is_empty() {
        return ResponsePlanItem {
            kind: ResponseKind::Paraphrase,
            words: system_gist.words.clone(),
            provenance: vec!["fallback:verbatim-gist".into()],
        };
    }
    let n = counters.0.entry(system_gist.topic.to_string()).or_default();
    let chosen = &variants[*n % variants.len()];
    *n += 1;
    ResponsePlanItem {
        kind: ResponseKind::Paraphrase,
        words: chosen.result.render().split_whitespace().map(String::from).collect(),
        provenance: chosen.trace.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackMode {
    Clarify,
    Default,
}

/// Chooses between asking for clarification and giving the schema default.
///
/// Clarification is used while fewer than `max_clarifications` have been
/// given in a row; the next failure gets the default response and resets
/// the count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackPolicy {
    pub seed: u64,
    pub consecutive_clarifications: usize,
    pub clarifications_given: u64,
}

impl FallbackPolicy {
    pub fn new(seed: u64) -> Self {
        FallbackPolicy { seed, consecutive_clarifications: 0, clarifications_given: 0 }
    }

    pub fn next_mode(&self, max_clarifications: usize) -> FallbackMode {
        if self.consecutive_clarifications < max_clarifications {
            FallbackMode::Clarify
        } else {
            FallbackMode::Default
        }
    }

    /// A turn was understood; the clarification streak ends.
    pub fn reset(&mut self) {
        self.consecutive_clarifications = 0;
    }

    /// Produces the fallback item for `mode`. `default_response` is the active
    /// schema's default, used for [`FallbackMode::Default`].
    pub fn respond(
        &mut self,
        mode: FallbackMode,
        clarifications: &[String],
        default_response: Option<(&Symbol, &[String])>,
    ) -> ResponsePlanItem {
        match (mode, default_response) {
            (FallbackMode::Default, default) => {
                self.consecutive_clarifications = 0;
                let (words, rule) = match default {
                    Some((schema, words)) if !words.is_empty() => (words.to_vec(), format!("fallback:default:{schema}")),
                    _ => (
                        GENERIC_DEFAULT.split_whitespace().map(String::from).collect(),
                        "fallback:default:builtin".to_string(),
                    ),
                };
                ResponsePlanItem { kind: ResponseKind::SchemaDefault, words, provenance: vec![rule] }
            }
            _ => {
                let builtin: Vec<String>;
                let pool = if clarifications.is_empty() {
                    builtin = DEFAULT_CLARIFICATIONS.iter().map(|s| s.to_string()).collect();
                    &builtin
                } else {
                    clarifications
                };
                let idx = ((self.seed.wrapping_add(self.clarifications_given)) % pool.len() as u64) as usize;
                self.clarifications_given += 1;
                self.consecutive_clarifications += 1;
                ResponsePlanItem {
                    kind: ResponseKind::Clarification,
                    words: pool[idx].split_whitespace().map(String::from).collect(),
                    provenance: vec![format!("fallback:clarify:{idx}")],
                }
            }
        }
    }
}

/// Produces a fallback item, choosing the mode from the policy.
pub fn fallback_response(
    policy: &mut FallbackPolicy,
    max_clarifications: usize,
    clarifications: &[String],
    default_response: Option<(&Symbol, &[String])>,
) -> ResponsePlanItem {
    let mode = policy.next_mode(max_clarifications);
    policy.respond(mode, clarifications, default_response)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transduction::{parse_tree_file, tokenize, FeatureLexicon};

    const TREES: &str = r#"
        (tree react.general
          (node "0 spread 0" (say "oh no . that's terrible news ."))
          (node "could you repeat that ?" (say "$last"))
          (node "0 treatment 0" (schema ask-about-treatment)))
        (tree paraphrase.test-results
          (node "0 // 0"
            (node "0" (say "so , what do my test results mean ?"))
            (node "0" (say "do you know what my test results say ?"))))
    "#;

    fn trees() -> TreeSet {
        TreeSet::new(parse_tree_file(TREES, None).unwrap(), FeatureLexicon::new()).unwrap()
    }

    fn gist(text: &str, topic: &str) -> GistClause {
        GistClause::new(tokenize(text), Symbol::new(topic))
    }

    #[test]
    fn reactions() {
        let t = trees();
        let r = select_reaction(&t, &gist("the cancer has spread .", "test-results")).unwrap();
        assert_eq!(r.result.render(), "oh no . that's terrible news .");
        let r = select_reaction(&t, &gist("could you repeat that ?", "repeat")).unwrap();
        let words = expand_last(&tokenize(&r.result.render()), &tokenize("i feel tired ."));
        assert_eq!(words, tokenize("i feel tired ."));
        assert!(select_reaction(&t, &gist("tangerine elbow", "x")).is_none());
    }

    #[test]
    fn paraphrase_rotates() {
        let t = trees();
        let mut c = ParaphraseCounters::default();
        let g = gist("do you know the results of my test ?", "test-results");
        let a = paraphrase(&t, &g, None, &mut c);
        let b = paraphrase(&t, &g, None, &mut c);
        assert_eq!(a.text(), "so , what do my test results mean ?");
        assert_ne!(a.words, b.words);
        assert_eq!(a.provenance, vec!["paraphrase.test-results#1", "paraphrase.test-results#1.1"]);
        let other = paraphrase(&t, &gist("how are you ?", "feeling"), None, &mut c);
        assert_eq!(other.text(), "how are you ?");
    }

    #[test]
    fn clarify_then_default() {
        let mut p = FallbackPolicy::new(0);
        let default = tokenize("i see . anyway , what are my options ?");
        let name = Symbol::new("ask-about-treatment");
        let kinds: Vec<_> = (0..5)
            .map(|_| fallback_response(&mut p, 2, &[], Some((&name, &default))).kind)
            .collect();
        use ResponseKind::*;
        assert_eq!(kinds, vec![Clarification, Clarification, SchemaDefault, Clarification, Clarification]);
        let mut p = FallbackPolicy::new(0);
        let kinds: Vec<_> = (0..3).map(|_| fallback_response(&mut p, 2, &[], None).kind).collect();
        assert_eq!(kinds[2], SchemaDefault);
        let mut p = FallbackPolicy::new(0);
        let first = fallback_response(&mut p, 2, &[], None);
        assert_eq!(first.text(), "i'm sorry , could you say that in a different way ?");
        let second = fallback_response(&mut p, 2, &[], None);
        assert_ne!(first.words, second.words);
    }
}
