use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// One element of a node pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PatternToken {
    Literal(String),
    /// Exactly one word belonging to the named feature class.
    Feature(String),
    /// A span of words; `0` is unbounded, `n > 0` means at most `n` words.
    Wildcard(u32),
}

impl PatternToken {
    /// Reads a pattern word: integers are wildcards, `.name` is a feature.
    pub fn from_word(word: &str) -> Self {
        if !word.is_empty() && word.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(n) = word.parse() {
                return PatternToken::Wildcard(n);
            }
        }
        match word.strip_prefix('.') {
            Some(name) if !name.is_empty() => PatternToken::Feature(name.to_lowercase()),
            _ => PatternToken::Literal(word.to_lowercase()),
        }
    }

    pub fn captures(&self) -> bool {
        !matches!(self, PatternToken::Literal(_))
    }
}

impl fmt::Display for PatternToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternToken::Literal(w) => f.write_str(w),
            PatternToken::Feature(n) => write!(f, ".{n}"),
            PatternToken::Wildcard(n) => write!(f, "{n}"),
        }
    }
}

pub fn parse_pattern(text: &str) -> Vec<PatternToken> {
    text.split_whitespace().map(PatternToken::from_word).collect()
}

/// Named word classes. Lookups are case-insensitive.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureLexicon {
    features: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct LexiconError {
    pub line: usize,
    pub message: String,
}

impl FeatureLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reads `feature: w1 w2 ...` lines. `#` and `;` start comments.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut lex = FeatureLexicon::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (name, words) = line.split_once(':').ok_or_else(|| LexiconError {
                line: i + 1,
                message: format!("expected `feature: words`, found `{line}`"),
            })?;
            let name = name.trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(LexiconError { line: i + 1, message: format!("bad feature name `{name}`") });
            }
            lex.add(name, words.split_whitespace());
        }
        Ok(lex)
    }

    pub fn add<'a>(&mut self, feature: &str, words: impl IntoIterator<Item = &'a str>) {
        self.features
            .entry(feature.to_lowercase())
            .or_default()
            .extend(words.into_iter().map(str::to_lowercase));
    }

    pub fn has_feature(&self, feature: &str) -> bool {
        self.features.contains_key(&feature.to_lowercase())
    }

    pub fn has(&self, feature: &str, word: &str) -> bool {
        self.features.get(feature).is_some_and(|ws| ws.contains(&word.to_lowercase()))
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.features.keys().map(String::as_str)
    }
}

/// Word spans captured by a match, one per wildcard or feature token.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct MatchResult {
    pub captures: Vec<Vec<String>>,
    /// `(start, end)` word offsets of each capture.
    #[serde(skip)]
    pub spans: Vec<(usize, usize)>,
}

/// Matches `pattern` against lowercased `words`.
///
/// Wildcards take the shortest span that still lets the rest of the pattern
/// match, left to right, backtracking as needed. The result is therefore the
/// assignment whose vector of wildcard lengths is lexicographically smallest.
pub fn match_pattern(pattern: &[PatternToken], words: &[String], lex: &FeatureLexicon) -> Option<MatchResult> {
    let mut spans = Vec::new();
    if !match_from(pattern, words, 0, lex, &mut spans) {
        return None;
    }
    let captures = spans.iter().map(|&(s, e)| words[s..e].to_vec()).collect();
    Some(MatchResult { captures, spans })
}

fn match_from(
    pattern: &[PatternToken],
    words: &[String],
    at: usize,
    lex: &FeatureLexicon,
    spans: &mut Vec<(usize, usize)>,
) -> bool {
    let Some((tok, rest)) = pattern.split_first() else {
        return at == words.len();
    };
    match tok {
        PatternToken::Literal(lit) => {
            at < words.len() && words[at] == *lit && match_from(rest, words, at + 1, lex, spans)
        }
        PatternToken::Feature(name) => {
            if at < words.len() && lex.has(name, &words[at]) {
                spans.push((at, at + 1));
                if match_from(rest, words, at + 1, lex, spans) {
                    return true;
                }
                spans.pop();
            }
            false
        }
        PatternToken::Wildcard(bound) => {
            let remaining = words.len() - at;
            // each remaining literal or feature token needs one word
            let needed = rest.iter().filter(|t| !matches!(t, PatternToken::Wildcard(_))).count();
            let mut max = remaining.saturating_sub(needed);
            if *bound > 0 {
                max = max.min(*bound as usize);
            }
            for len in 0..=max {
                spans.push((at, at + len));
                if match_from(rest, words, at + len, lex, spans) {
                    return true;
                }
                spans.pop();
            }
            false
        }
    }
}

/// Splits text into lowercased words, separating sentence punctuation.
pub fn tokenize(text: &str) -> Vec<String> {
    const PUNCT: &[char] = &['.', ',', '?', '!', ';', ':'];
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let raw = raw.trim_matches(|c| c == '"' || c == '(' || c == ')');
        let mut word = raw.to_lowercase();
        let mut trailing = Vec::new();
        while let Some(c) = word.chars().last().filter(|c| PUNCT.contains(c)) {
            trailing.push(c.to_string());
            word.pop();
        }
        let mut leading = Vec::new();
        while let Some(c) = word.chars().next().filter(|c| PUNCT.contains(c)) {
            leading.push(c.to_string());
            word.remove(0);
        }
        out.extend(leading);
        if !word.is_empty() {
            out.push(word);
        }
        out.extend(trailing.into_iter().rev());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn wildcard_around_literals() {
        let p = parse_pattern("0 test results 0");
        let m = match_pattern(&p, &w("do you have my test results yet"), &FeatureLexicon::new()).unwrap();
        assert_eq!(m.captures, vec![w("do you have my"), w("yet")]);
    }

    #[test]
    fn empty_pattern_and_input() {
        let m = match_pattern(&[], &[], &FeatureLexicon::new()).unwrap();
        assert!(m.captures.is_empty());
        assert!(match_pattern(&[], &w("x"), &FeatureLexicon::new()).is_none());
    }

    #[test]
    fn bounded_wildcard() {
        let p = [PatternToken::Wildcard(2)];
        assert!(match_pattern(&p, &w("a b c"), &FeatureLexicon::new()).is_none());
        assert!(match_pattern(&p, &w("a b"), &FeatureLexicon::new()).is_some());
    }

    #[test]
    fn shortest_first_wildcard() {
        let p = parse_pattern("0 a 0");
        let m = match_pattern(&p, &w("a b a c"), &FeatureLexicon::new()).unwrap();
        assert_eq!(m.captures, vec![w(""), w("b a c")]);
    }

    #[test]
    fn features() {
        let lex = FeatureLexicon::parse("cancer: cancer tumor tumour\n# comment\nbad: awful terrible").unwrap();
        let p = parse_pattern("0 .cancer 0 spread 0");
        let m = match_pattern(&p, &w("i'm afraid the tumor has spread"), &lex).unwrap();
        assert_eq!(m.captures[1], w("tumor"));
        assert!(match_pattern(&p, &w("the flu has spread"), &lex).is_none());
        assert!(lex.has("cancer", "TUMOR"));
    }

    #[test]
    fn lexicon_errors() {
        assert_eq!(FeatureLexicon::parse("x y z").unwrap_err().line, 1);
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("I'm afraid the cancer has spread."), w("i'm afraid the cancer has spread ."));
        assert_eq!(tokenize("Well, what are my options?!"), w("well , what are my options ? !"));
        assert!(tokenize("   ").is_empty());
    }
}
