use dialschema::transduction::{
    match_pattern, parse_tree_file, tokenize, FeatureLexicon, PatternToken, TreeSet, DEFAULT_MAX_DEPTH,
};
use proptest::prelude::*;

const VOCAB: [&str; 5] = ["a", "b", "c", "d", "e"];

fn lexicon() -> FeatureLexicon {
    let mut lex = FeatureLexicon::new();
    lex.add("ab", ["a", "b"]);
    lex.add("cde", ["c", "d", "e"]);
    lex
}

fn token() -> impl Strategy<Value = PatternToken> {
    prop_oneof![
        3 => prop::sample::select(VOCAB.to_vec()).prop_map(|w| PatternToken::Literal(w.into())),
        1 => prop::sample::select(vec!["ab", "cde"]).prop_map(|f| PatternToken::Feature(f.into())),
        3 => (0u32..4).prop_map(PatternToken::Wildcard),
    ]
}

fn input() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(VOCAB.to_vec()).prop_map(String::from), 0..=6)
}

/// Every way of cutting `words` into one span per token that satisfies the
/// token, as span lengths, in lexicographic order of the length vector.
fn all_assignments(pattern: &[PatternToken], words: &[String], lex: &FeatureLexicon) -> Vec<Vec<usize>> {
    let n = words.len();
    let mut out = Vec::new();
    let k = pattern.len();
    let mut lengths = vec![0usize; k];
    loop {
        if lengths.iter().sum::<usize>() == n {
            let mut at = 0;
            let ok = pattern.iter().zip(&lengths).all(|(tok, &len)| {
                let span = &words[at..at + len];
                at += len;
                match tok {
                    PatternToken::Literal(l) => len == 1 && span[0] == *l,
                    PatternToken::Feature(f) => len == 1 && lex.has(f, &span[0]),
                    PatternToken::Wildcard(b) => *b == 0 || len <= *b as usize,
                }
            });
            if ok {
                out.push(lengths.clone());
            }
        }
        // odometer over 0..=n for each position, most significant first
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if lengths[i] < n {
                lengths[i] += 1;
                for l in &mut lengths[i + 1..] {
                    *l = 0;
                }
                break;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3000))]

    #[test]
    fn match_agrees_with_exhaustive_enumeration(
        pattern in prop::collection::vec(token(), 0..=4),
        words in input(),
    ) {
        let lex = lexicon();
        let expected = all_assignments(&pattern, &words, &lex);
        let got = match_pattern(&pattern, &words, &lex);
        match (expected.first(), got) {
            (None, None) => {}
            (Some(lengths), Some(m)) => {
                let capture_lengths: Vec<usize> = pattern
                    .iter()
                    .zip(lengths)
                    .filter(|(t, _)| t.captures())
                    .map(|(_, &l)| l)
                    .collect();
                let got_lengths: Vec<usize> = m.captures.iter().map(Vec::len).collect();
                prop_assert_eq!(got_lengths, capture_lengths);
                // literals and captures in pattern order rebuild the input
                let mut rebuilt = Vec::new();
                let mut caps = m.captures.iter();
                for t in &pattern {
                    match t {
                        PatternToken::Literal(l) => rebuilt.push(l.clone()),
                        _ => rebuilt.extend(caps.next().unwrap().iter().cloned()),
                    }
                }
                prop_assert_eq!(rebuilt, words);
            }
            (e, g) => prop_assert!(false, "oracle {:?} vs matcher {:?}", e, g),
        }
    }

    #[test]
    fn bounded_wildcards_respect_bound(
        pattern in prop::collection::vec(token(), 0..=5),
        words in prop::collection::vec(prop::sample::select(VOCAB.to_vec()).prop_map(String::from), 0..=10),
    ) {
        if let Some(m) = match_pattern(&pattern, &words, &lexicon()) {
            let bounds = pattern.iter().filter(|t| t.captures()).map(|t| match t {
                PatternToken::Wildcard(b) => *b as usize,
                _ => 1,
            });
            for (cap, bound) in m.captures.iter().zip(bounds) {
                prop_assert!(bound == 0 || cap.len() <= bound);
            }
        }
    }

    #[test]
    fn appending_a_node_keeps_first_match(
        patterns in prop::collection::vec(prop::collection::vec(token(), 0..=3), 1..4),
        extra in prop::collection::vec(token(), 0..=3),
        words in input(),
    ) {
        let node = |p: &[PatternToken], i: usize| {
            let text: Vec<String> = p.iter().map(ToString::to_string).collect();
            format!("(node \"{}\" (say \"r{i}\"))", text.join(" "))
        };
        let body: String = patterns.iter().enumerate().map(|(i, p)| node(p, i)).collect();
        let base = format!("(tree t {body})");
        let extended = format!("(tree t {body}{})", node(&extra, 99));
        let load = |text: &str| TreeSet::new(parse_tree_file(text, None).unwrap(), lexicon()).unwrap();
        let before = load(&base).transduce("t", &words);
        let after = load(&extended).transduce("t", &words);
        if before.is_some() {
            prop_assert_eq!(before, after);
        }
    }
}

#[test]
fn self_referencing_subtree_is_bounded() {
    let text = "(tree loop (node \"0\" (subtree loop)))";
    let set = TreeSet::new(parse_tree_file(text, None).unwrap(), lexicon()).unwrap();
    assert!(set.transduce("loop", &tokenize("a b")).is_none());
    let shallow = set.clone().with_max_depth(3);
    assert!(shallow.transduce("loop", &tokenize("a")).is_none());
}

#[test]
fn chain_within_bound_succeeds() {
    let mut text = String::new();
    for i in 0..DEFAULT_MAX_DEPTH {
        text.push_str(&format!("(tree t{i} (node \"0\" (subtree t{})))", i + 1));
    }
    text.push_str(&format!("(tree t{DEFAULT_MAX_DEPTH} (node \"0\" (say \"bottom\")))"));
    let set = TreeSet::new(parse_tree_file(&text, None).unwrap(), lexicon()).unwrap();
    let r = set.transduce("t0", &tokenize("x")).unwrap();
    assert_eq!(r.result.render(), "bottom");
    assert_eq!(r.trace.len(), DEFAULT_MAX_DEPTH + 1);
    let too_shallow = set.with_max_depth(DEFAULT_MAX_DEPTH - 1);
    assert!(too_shallow.transduce("t0", &tokenize("x")).is_none());
}

#[test]
fn transduce_is_deterministic() {
    let text = r#"(tree t (node "0 a 0" (node "b 0" (say "1")) (node "0" (say "x 1"))))"#;
    let set = TreeSet::new(parse_tree_file(text, None).unwrap(), lexicon()).unwrap();
    let words = tokenize("c a b a");
    let first = set.transduce("t", &words);
    for _ in 0..100 {
        assert_eq!(set.transduce("t", &words), first);
    }
}
