use super::expr::{Bindings, Expr};

/// One-directional matching of `pattern` against a ground `fact`.
///
/// Variables may occur only in the pattern. The result extends `seed`; a
/// variable already bound in `seed` must match its bound value exactly.
pub fn unify(pattern: &Expr, fact: &Expr, seed: &Bindings) -> Option<Bindings> {
    let mut out = seed.clone();
    unify_into(pattern, fact, &mut out).then_some(out)
}

fn unify_into(pattern: &Expr, fact: &Expr, b: &mut Bindings) -> bool {
    match (pattern, fact) {
        (Expr::Variable(v), _) => match b.get(v) {
            Some(bound) => bound == fact,
            None => b.bind(v.clone(), fact.clone()),
        },
        (Expr::List(ps), Expr::List(fs)) => {
            ps.len() == fs.len() && ps.iter().zip(fs).all(|(p, f)| unify_into(p, f, b))
        }
        _ => pattern == fact,
    }
}

/// Replaces every bound variable of `e`; unbound ones are left as they are.
pub fn substitute(e: &Expr, b: &Bindings) -> Expr {
    match e {
        Expr::Variable(v) => b.get(v).cloned().unwrap_or_else(|| e.clone()),
        Expr::List(items) => Expr::List(items.iter().map(|i| substitute(i, b)).collect()),
        _ => e.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::el::{parse_expr, Variable};

    fn p(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    #[test]
    fn single_variable() {
        let b = unify(&p("(^you reply-to.v ?e1)"), &p("(^you reply-to.v E3)"), &Bindings::new()).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.get(&Variable::new("e1")), Some(&p("e3")));
    }

    #[test]
    fn symbol_clash() {
        assert!(unify(&p("(A B)"), &p("(A C)"), &Bindings::new()).is_none());
        assert!(unify(&p("(A B)"), &p("(A B C)"), &Bindings::new()).is_none());
    }

    #[test]
    fn repeated_variable_must_agree() {
        assert!(unify(&p("(?x loves ?x)"), &p("(a loves b)"), &Bindings::new()).is_none());
        assert!(unify(&p("(?x loves ?x)"), &p("(a loves a)"), &Bindings::new()).is_some());
    }

    #[test]
    fn seed_is_respected() {
        let seed: Bindings = [(Variable::new("x"), p("a"))].into_iter().collect();
        assert!(unify(&p("(?x ?y)"), &p("(b c)"), &seed).is_none());
        let out = unify(&p("(?x ?y)"), &p("(a c)"), &seed).unwrap();
        assert!(seed.is_extended_by(&out));
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn substitute_examples() {
        let b: Bindings = [(Variable::new("x"), p("SOPHIE"))].into_iter().collect();
        assert_eq!(substitute(&p("(?x loves ?x)"), &b), p("(sophie loves sophie)"));
        let e = p("(?x (f ?y))");
        assert_eq!(substitute(&e, &Bindings::new()), e);
    }

    #[test]
    fn free_variables_examples() {
        let vars = p("(?e1 (^me ask.v ?q))").free_variables();
        let names: Vec<_> = vars.iter().map(|v| v.to_string()).collect();
        assert_eq!(names, ["?e1", "?q"]);
        assert!(p("(a (b \"c d\") 3)").free_variables().is_empty());
    }
}
