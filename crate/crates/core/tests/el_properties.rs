use std::collections::BTreeSet;

use dialschema::el::{
    free_variables, parse_expr, substitute, unify, Bindings, Expr, Indexical, Variable, Word,
};
use proptest::prelude::*;

fn symbol() -> impl Strategy<Value = Expr> {
    prop_oneof![
        Just(Expr::sym("a")),
        Just(Expr::sym("say-to.v")),
        Just(Expr::sym("Sophie")),
        Just(Expr::sym("cancer.n")),
        Just(Expr::sym(":goals")),
        "[a-z][a-z0-9.-]{0,6}".prop_map(Expr::sym),
    ]
}

fn number() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (-1000i32..1000).prop_map(|n| Expr::num(n as f64)),
        (0.0f64..1.0).prop_map(Expr::num),
        (-1e12f64..1e12).prop_map(Expr::num),
    ]
}

fn words() -> impl Strategy<Value = Expr> {
    prop::collection::vec("[A-Za-z',.?]{1,5}", 0..5)
        .prop_map(|ws| Expr::Words(ws.into_iter().map(Word::new).collect()))
}

fn ground_leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        4 => symbol(),
        1 => number(),
        1 => words(),
        1 => Just(Expr::Indexical(Indexical::Me)),
        1 => Just(Expr::Indexical(Indexical::You)),
    ]
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        4 => ground_leaf(),
        2 => "[a-z][a-z0-9]{0,3}".prop_map(Expr::var),
    ]
}

fn tree(leaf: impl Strategy<Value = Expr> + 'static, depth: u32) -> impl Strategy<Value = Expr> {
    leaf.prop_recursive(depth, 64, 4, |inner| {
        prop::collection::vec(inner, 1..5).prop_map(Expr::List)
    })
}

fn expr() -> impl Strategy<Value = Expr> {
    tree(leaf(), 6)
}

fn ground_expr() -> impl Strategy<Value = Expr> {
    tree(ground_leaf(), 4)
}

/// Replace a random subset of subterms of a ground term with variables, so
/// the resulting pattern is guaranteed to unify when variables are fresh.
fn abstract_pattern(fact: &Expr, picks: &mut impl Iterator<Item = u8>, counter: &mut usize) -> Expr {
    let roll = picks.next().unwrap_or(0);
    if roll.is_multiple_of(5) {
        *counter += 1;
        return Expr::var(format!("v{counter}"));
    }
    match fact {
        Expr::List(items) => {
            Expr::List(items.iter().map(|i| abstract_pattern(i, picks, counter)).collect())
        }
        other => other.clone(),
    }
}

fn naive_vars(e: &Expr, out: &mut BTreeSet<Variable>) {
    match e {
        Expr::Variable(v) => {
            out.insert(v.clone());
        }
        Expr::List(items) => {
            for i in items {
                naive_vars(i, out);
            }
        }
        _ => {}
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn print_parse_round_trip(e in expr()) {
        prop_assume!(e.depth() <= 6);
        let printed = e.to_string();
        let back = parse_expr(&printed).unwrap();
        prop_assert_eq!(&back, &e);
        prop_assert_eq!(back.to_string(), printed);
    }

    #[test]
    fn case_variants_parse_equal(e in ground_expr()) {
        let printed = e.to_string();
        prop_assert_eq!(parse_expr(&printed.to_uppercase()).unwrap(), parse_expr(&printed).unwrap());
    }

    #[test]
    fn unify_with_self_is_empty(e in ground_expr()) {
        prop_assert_eq!(unify(&e, &e, &Bindings::new()), Some(Bindings::new()));
    }

    #[test]
    fn unify_is_sound(fact in ground_expr(), picks in prop::collection::vec(any::<u8>(), 64)) {
        let mut it = picks.into_iter();
        let pattern = abstract_pattern(&fact, &mut it, &mut 0);
        let b = unify(&pattern, &fact, &Bindings::new()).expect("abstraction of fact must unify");
        prop_assert_eq!(substitute(&pattern, &b), fact);
    }

    #[test]
    fn unify_success_implies_sound(pattern in expr(), fact in ground_expr()) {
        if let Some(b) = unify(&pattern, &fact, &Bindings::new()) {
            prop_assert_eq!(substitute(&pattern, &b), fact);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn substitute_idempotent_with_ground_range(
        e in expr(),
        values in prop::collection::vec(ground_expr(), 1..4),
    ) {
        let vars: Vec<_> = e.free_variables().into_iter().collect();
        let b: Bindings = vars.iter().cloned().zip(values.into_iter().cycle()).collect();
        let once = substitute(&e, &b);
        prop_assert_eq!(substitute(&once, &b), once.clone());
        prop_assert!(once.is_ground());
    }

    #[test]
    fn free_variables_match_naive_scan(e in expr()) {
        let mut naive = BTreeSet::new();
        naive_vars(&e, &mut naive);
        prop_assert_eq!(free_variables(&e), naive);
    }

    #[test]
    fn substitute_empty_is_identity(e in expr()) {
        prop_assert_eq!(substitute(&e, &Bindings::new()), e);
    }
}
