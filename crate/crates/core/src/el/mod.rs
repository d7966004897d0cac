//! Parenthesized symbolic expressions: the shared notation for schemas, facts,
//! gist clauses, patterns and unscoped logical forms.
//!
//! Grammar: whitespace-separated tokens inside balanced parentheses, `;`
//! comments to end of line, and `"`-delimited word lists. Tokens starting
//! with `?` are variables, `^me`/`^you` are participant indexicals, numeric
//! tokens are numbers, and everything else is a case-insensitive symbol.
//! The printer is canonical: single spaces, lowercase symbols.

mod expr;
mod parse;
mod unify;

pub use expr::{Bindings, Expr, Indexical, Number, Symbol, Variable, Word};
pub use parse::{parse_all, parse_all_spanned, parse_atom, parse_expr, ParseError, Pos, Spanned};
pub use unify::{substitute, unify};

/// Variables occurring in `e`.
pub fn free_variables(e: &Expr) -> std::collections::BTreeSet<Variable> {
    e.free_variables()
}
