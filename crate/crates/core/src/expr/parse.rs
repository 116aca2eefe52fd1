//! Recursive-descent parser.
//!
//! Grammar, loosest first:
//!
//! ```text
//! sum   := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := ('-' | '+') unary | power
//! power := atom ('^' unary)?
//! atom  := number | name | name '(' sum (',' sum)* ')' | '(' sum ')'
//! ```

use thiserror::Error;

use super::{BinOp, Expr, Func, Var};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedEnd,
    UnexpectedChar(char),
    TrailingInput,
    BadNumber(String),
    UnknownIdentifier(String),
    ExpectedParen(String),
    Arity { func: String, expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{} at offset {offset}", describe(kind))]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

fn describe(kind: &ParseErrorKind) -> String {
    match kind {
        ParseErrorKind::UnexpectedEnd => "unexpected end of input".into(),
        ParseErrorKind::UnexpectedChar(c) => format!("unexpected character '{c}'"),
        ParseErrorKind::TrailingInput => "unexpected trailing input".into(),
        ParseErrorKind::BadNumber(s) => format!("invalid number '{s}'"),
        ParseErrorKind::UnknownIdentifier(s) => format!("unknown identifier '{s}'"),
        ParseErrorKind::ExpectedParen(s) => format!("expected '(' after '{s}'"),
        ParseErrorKind::Arity { func, expected, got } => {
            format!("{func} takes {expected} argument(s), got {got}")
        }
    }
}

pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser { src, pos: 0 };
    let e = p.sum()?;
    p.skip_ws();
    if p.pos < src.len() {
        return Err(p.error(ParseErrorKind::TrailingInput));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            offset: self.pos,
            kind,
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek_raw() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek_raw(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.peek_raw()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some('+') => BinOp::Add,
                Some('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some('*') => BinOp::Mul,
                Some('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat('^') {
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let c = match self.peek() {
            None => return Err(self.error(ParseErrorKind::UnexpectedEnd)),
            Some(c) => c,
        };
        if c == '(' {
            self.pos += 1;
            let inner = self.sum()?;
            self.expect_close()?;
            return Ok(inner);
        }
        if c.is_ascii_digit() || c == '.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() || c == '_' {
            return self.name();
        }
        Err(self.error(ParseErrorKind::UnexpectedChar(c)))
    }

    fn expect_close(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Some(')') => {
                self.pos += 1;
                Ok(())
            }
            None => Err(self.error(ParseErrorKind::UnexpectedEnd)),
            Some(c) => Err(self.error(ParseErrorKind::UnexpectedChar(c))),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut i = start;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = &self.src[start..i];
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => {
                self.pos = i;
                Ok(Expr::Num(v))
            }
            _ => Err(ParseError {
                offset: start,
                kind: ParseErrorKind::BadNumber(text.to_string()),
            }),
        }
    }

    fn name(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut i = start;
        while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
            i += 1;
        }
        let name = &self.src[start..i];
        self.pos = i;
        let unknown = || ParseError {
            offset: start,
            kind: ParseErrorKind::UnknownIdentifier(name.to_string()),
        };

        if let Some(func) = Func::from_name(name) {
            if !self.eat('(') {
                return Err(ParseError {
                    offset: self.pos,
                    kind: ParseErrorKind::ExpectedParen(name.to_string()),
                });
            }
            let mut args = vec![self.sum()?];
            while self.eat(',') {
                args.push(self.sum()?);
            }
            self.expect_close()?;
            if args.len() != 1 {
                return Err(ParseError {
                    offset: start,
                    kind: ParseErrorKind::Arity {
                        func: name.to_string(),
                        expected: 1,
                        got: args.len(),
                    },
                });
            }
            return Ok(Expr::Call(func, Box::new(args.pop().unwrap())));
        }

        let expr = match name {
            "t" => Expr::Var(Var::T),
            "z" => Expr::Var(Var::Z),
            "pi" => Expr::Num(std::f64::consts::PI),
            "e" => Expr::Num(std::f64::consts::E),
            _ => {
                let (head, digits) = name.split_at(1);
                let index = match digits.parse::<usize>() {
                    Ok(k) if k >= 1 && !digits.starts_with('0') => k - 1,
                    _ => return Err(unknown()),
                };
                match head {
                    "x" => Expr::Var(Var::X(index)),
                    "v" => Expr::Var(Var::V(index)),
                    _ => return Err(unknown()),
                }
            }
        };
        if self.peek() == Some('(') {
            return Err(unknown());
        }
        Ok(expr)
    }
}
