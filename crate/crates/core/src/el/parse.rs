use std::fmt;

use thiserror::Error;

use super::expr::{Expr, Indexical, Number, Symbol, Variable, Word};

/// 1-based line and column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{pos}: empty input")]
    EmptyInput { pos: Pos },
    #[error("{pos}: unbalanced parentheses")]
    UnbalancedParens { pos: Pos },
    #[error("{pos}: unterminated quote")]
    UnterminatedQuote { pos: Pos },
    #[error("{pos}: invalid token `{token}`")]
    InvalidToken { token: String, pos: Pos },
    #[error("{pos}: unexpected input after expression")]
    TrailingInput { pos: Pos },
}

impl ParseError {
    pub fn pos(&self) -> Pos {
        match self {
            ParseError::EmptyInput { pos }
            | ParseError::UnbalancedParens { pos }
            | ParseError::UnterminatedQuote { pos }
            | ParseError::InvalidToken { pos, .. }
            | ParseError::TrailingInput { pos } => *pos,
        }
    }
}

/// Parses exactly one expression.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut reader = Reader::new(text);
    reader.skip_trivia();
    if reader.peek().is_none() {
        return Err(ParseError::EmptyInput { pos: reader.pos() });
    }
    let expr = reader.read()?;
    reader.skip_trivia();
    if reader.peek().is_some() {
        return Err(ParseError::TrailingInput { pos: reader.pos() });
    }
    Ok(expr)
}

/// Parses a sequence of top-level expressions, each with its starting position.
pub fn parse_all(text: &str) -> Result<Vec<(Pos, Expr)>, ParseError> {
    let mut reader = Reader::new(text);
    let mut out = Vec::new();
    loop {
        reader.skip_trivia();
        if reader.peek().is_none() {
            return Ok(out);
        }
        let pos = reader.pos();
        out.push((pos, reader.read()?));
    }
}

/// An expression with the source position of it and of every nested item.
#[derive(Debug, Clone, PartialEq)]
pub struct Spanned {
    pub pos: Pos,
    pub expr: Expr,
    /// Nested items when `expr` is a list.
    pub items: Vec<Spanned>,
}

/// Like [`parse_all`], keeping positions for nested items.
pub fn parse_all_spanned(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut reader = Reader::new(text);
    let mut out = Vec::new();
    loop {
        reader.skip_trivia();
        if reader.peek().is_none() {
            return Ok(out);
        }
        out.push(reader.read_spanned()?);
    }
}

/// Classifies a bare token.
pub fn parse_atom(token: &str) -> Option<Expr> {
    if let Some(name) = token.strip_prefix('?') {
        if name.is_empty() {
            return None;
        }
        return Some(Expr::Variable(Variable::new(name)));
    }
    if token.starts_with('^') {
        return match token.to_lowercase().as_str() {
            "^me" => Some(Expr::Indexical(Indexical::Me)),
            "^you" => Some(Expr::Indexical(Indexical::You)),
            _ => None,
        };
    }
    if looks_numeric(token) {
        return token.parse::<f64>().ok().and_then(Number::new).map(Expr::Number);
    }
    Some(Expr::Symbol(Symbol::new(token)))
}

/// `[+-]?digits(.digits)?([eE][+-]?digits)?`
fn looks_numeric(token: &str) -> bool {
    let b = token.as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let digits = |i: &mut usize| {
        let start = *i;
        while *i < b.len() && b[*i].is_ascii_digit() {
            *i += 1;
        }
        *i > start
    };
    if !digits(&mut i) {
        return false;
    }
    if i < b.len() && b[i] == b'.' {
        i += 1;
        if !digits(&mut i) {
            return false;
        }
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        i += 1;
        if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
            i += 1;
        }
        if !digits(&mut i) {
            return false;
        }
    }
    i == b.len()
}

fn is_delimiter(c: char) -> bool {
    c.is_whitespace() || matches!(c, '(' | ')' | '"' | ';')
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader { chars: text.chars().peekable(), line: 1, column: 1 }
    }

    fn pos(&self) -> Pos {
        Pos { line: self.line, column: self.column }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == ';' {
                while let Some(c) = self.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn read(&mut self) -> Result<Expr, ParseError> {
        self.read_spanned().map(|s| s.expr)
    }

    fn read_spanned(&mut self) -> Result<Spanned, ParseError> {
        self.skip_trivia();
        let pos = self.pos();
        if self.peek() == Some('(') {
            self.bump();
            let mut items = Vec::new();
            loop {
                self.skip_trivia();
                match self.peek() {
                    None => return Err(ParseError::UnbalancedParens { pos }),
                    Some(')') => {
                        self.bump();
                        break;
                    }
                    Some(_) => items.push(self.read_spanned()?),
                }
            }
            if items.is_empty() {
                return Err(ParseError::EmptyInput { pos });
            }
            let expr = Expr::List(items.iter().map(|i| i.expr.clone()).collect());
            return Ok(Spanned { pos, expr, items });
        }
        let expr = self.read_atom(pos)?;
        Ok(Spanned { pos, expr, items: Vec::new() })
    }

    fn read_atom(&mut self, pos: Pos) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(ParseError::EmptyInput { pos }),
            Some('(') => unreachable!("lists handled by read_spanned"),
            Some(')') => Err(ParseError::UnbalancedParens { pos }),
            Some('"') => {
                self.bump();
                let mut body = String::new();
                loop {
                    match self.bump() {
                        None => return Err(ParseError::UnterminatedQuote { pos }),
                        Some('"') => break,
                        Some(c) => body.push(c),
                    }
                }
                Ok(Expr::Words(body.split_whitespace().map(Word::new).collect()))
            }
            Some(_) => {
                let mut token = String::new();
                while let Some(c) = self.peek() {
                    if is_delimiter(c) {
                        break;
                    }
                    token.push(c);
                    self.bump();
                }
                parse_atom(&token).ok_or(ParseError::InvalidToken { token, pos })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_say_to_episode() {
        let e = parse_expr("(?e (^me say-to.v ^you ?words))").unwrap();
        let expected = Expr::list([
            Expr::var("e"),
            Expr::list([
                Expr::Indexical(Indexical::Me),
                Expr::sym("say-to.v"),
                Expr::Indexical(Indexical::You),
                Expr::var("words"),
            ]),
        ]);
        assert_eq!(e, expected);
    }

    #[test]
    fn empty_list_is_empty_input() {
        assert!(matches!(parse_expr("()"), Err(ParseError::EmptyInput { .. })));
        assert!(matches!(parse_expr("   ; only a comment\n"), Err(ParseError::EmptyInput { .. })));
    }

    #[test]
    fn reports_positions() {
        let err = parse_expr("(a\n  (b c)").unwrap_err();
        assert_eq!(err, ParseError::UnbalancedParens { pos: Pos { line: 1, column: 1 } });
        let err = parse_expr("(a \"open").unwrap_err();
        assert_eq!(err, ParseError::UnterminatedQuote { pos: Pos { line: 1, column: 4 } });
        let err = parse_expr("(a))").unwrap_err();
        assert_eq!(err, ParseError::TrailingInput { pos: Pos { line: 1, column: 4 } });
        assert!(matches!(parse_expr(")"), Err(ParseError::UnbalancedParens { .. })));
    }

    #[test]
    fn rejects_bad_sigils() {
        assert!(matches!(parse_expr("(a ?)"), Err(ParseError::InvalidToken { .. })));
        assert!(matches!(parse_expr("^them"), Err(ParseError::InvalidToken { .. })));
    }

    #[test]
    fn comments_and_case() {
        let a = parse_expr("(Sophie HAS-CONDITION.N ; trailing\n Cancer.N)").unwrap();
        let b = parse_expr("(sophie has-condition.n cancer.n)").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "(sophie has-condition.n cancer.n)");
    }

    #[test]
    fn words_keep_case_for_display() {
        let a = parse_expr("\"What do MY test results mean ?\"").unwrap();
        let b = parse_expr("\"what do my test results mean ?\"").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "\"What do MY test results mean ?\"");
    }

    #[test]
    fn numbers() {
        assert_eq!(parse_expr("0.75").unwrap(), Expr::num(0.75));
        assert_eq!(parse_expr("-2").unwrap(), Expr::num(-2.0));
        assert_eq!(parse_expr("1e3").unwrap(), Expr::num(1000.0));
        assert_eq!(parse_expr("1.").unwrap(), Expr::sym("1."));
        assert_eq!(Expr::num(1.0).to_string(), "1");
    }

    #[test]
    fn parse_all_reads_sequence() {
        let all = parse_all("(a b)\n; c\n(c d) e").unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(all[1].0, Pos { line: 3, column: 1 });
    }
}
