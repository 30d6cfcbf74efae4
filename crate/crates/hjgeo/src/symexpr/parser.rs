//! Recursive-descent parser for the expression DSL.
//!
//! Standard infix precedence: `+ -` < `* /` < unary `-` < `^`.
//! `^` is right-associative and its exponent must reduce to a constant.

use super::{BinOp, Expr, UnaryOp};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("syntax error at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

fn err<T>(offset: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        offset,
        message: message.into(),
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number(f64),
    Name(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            bytes: src.as_bytes(),
            pos: 0,
        }
    }

    fn tokens(mut self) -> Result<Vec<(usize, Tok)>, ParseError> {
        let mut out = Vec::new();
        while self.pos < self.bytes.len() {
            let start = self.pos;
            let c = self.bytes[self.pos];
            match c {
                b' ' | b'\t' | b'\n' | b'\r' => {
                    self.pos += 1;
                }
                b'+' => self.push_single(&mut out, Tok::Plus),
                b'-' => self.push_single(&mut out, Tok::Minus),
                b'*' => self.push_single(&mut out, Tok::Star),
                b'/' => self.push_single(&mut out, Tok::Slash),
                b'^' => self.push_single(&mut out, Tok::Caret),
                b'(' => self.push_single(&mut out, Tok::LParen),
                b')' => self.push_single(&mut out, Tok::RParen),
                b'0'..=b'9' | b'.' => {
                    let tok = self.number(start)?;
                    out.push((start, tok));
                }
                b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                    while self.pos < self.bytes.len()
                        && (self.bytes[self.pos].is_ascii_alphanumeric()
                            || self.bytes[self.pos] == b'_')
                    {
                        self.pos += 1;
                    }
                    out.push((start, Tok::Name(self.src[start..self.pos].to_owned())));
                }
                _ => return err(start, format!("unexpected character `{}`", c as char)),
            }
        }
        Ok(out)
    }

    fn push_single(&mut self, out: &mut Vec<(usize, Tok)>, tok: Tok) {
        out.push((self.pos, tok));
        self.pos += 1;
    }

    fn number(&mut self, start: usize) -> Result<Tok, ParseError> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos < self.bytes.len() && self.bytes[self.pos] == b'.' {
            self.pos += 1;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        // exponent part, e.g. 1e-3
        if self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b'e' | b'E') {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = mark; // `e` was the start of a name, not an exponent
            }
        }
        let text = &self.src[start..self.pos];
        match text.parse::<f64>() {
            Ok(v) => Ok(Tok::Number(v)),
            Err(_) => err(start, format!("malformed number `{text}`")),
        }
    }
}

const FUNCTIONS: &[(&str, UnaryOp)] = &[
    ("sin", UnaryOp::Sin),
    ("cos", UnaryOp::Cos),
    ("exp", UnaryOp::Exp),
    ("log", UnaryOp::Log),
    ("sqrt", UnaryOp::Sqrt),
];

struct Parser {
    tokens: Vec<(usize, Tok)>,
    idx: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.idx).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.idx).map(|(o, _)| *o).unwrap_or(self.end)
    }

    fn advance(&mut self) -> Option<Tok> {
        let tok = self.tokens.get(self.idx).map(|(_, t)| t.clone());
        if tok.is_some() {
            self.idx += 1;
        }
        tok
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.idx += 1;
            Ok(())
        } else {
            err(self.offset(), format!("expected {what}"))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            self.idx += 1;
            let rhs = self.term()?;
            lhs = match op {
                BinOp::Add => Expr::add(lhs, rhs),
                _ => Expr::sub(lhs, rhs),
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => break,
            };
            self.idx += 1;
            let rhs = self.unary()?;
            lhs = match op {
                BinOp::Mul => Expr::mul(lhs, rhs),
                _ => Expr::div(lhs, rhs),
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(&Tok::Minus) {
            self.idx += 1;
            let inner = self.unary()?;
            return Ok(Expr::neg(inner));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.idx += 1;
            let exponent = self.exponent()?;
            return Ok(Expr::pow(base, exponent));
        }
        Ok(base)
    }

    // An exponent must fold to a constant; right-associative chains like
    // q^2^3 read as q^(2^3).
    fn exponent(&mut self) -> Result<f64, ParseError> {
        let at = self.offset();
        let mut negate = false;
        while self.peek() == Some(&Tok::Minus) {
            self.idx += 1;
            negate = !negate;
        }
        let base = match self.advance() {
            Some(Tok::Number(v)) => v,
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                match inner.as_const() {
                    Some(v) => v,
                    None => return err(at, "exponent must be a constant"),
                }
            }
            _ => return err(at, "expected a constant exponent"),
        };
        let value = if self.peek() == Some(&Tok::Caret) {
            self.idx += 1;
            let upper = self.exponent()?;
            super::pow_value(base, upper)
                .ok_or_else(|| ParseError {
                    offset: at,
                    message: "constant exponentiation out of domain".into(),
                })?
        } else {
            base
        };
        Ok(if negate { -value } else { value })
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        match self.advance() {
            Some(Tok::Number(v)) => Ok(Expr::Const(v)),
            Some(Tok::Name(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    let op = FUNCTIONS
                        .iter()
                        .find(|(n, _)| *n == name)
                        .map(|(_, op)| *op);
                    match op {
                        Some(op) => {
                            self.idx += 1;
                            let arg = self.expr()?;
                            self.expect(Tok::RParen, "`)`")?;
                            Ok(Expr::unary(op, arg))
                        }
                        None => err(at, format!("unknown function `{name}`")),
                    }
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            _ => err(at, "expected a value"),
        }
    }
}

pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let tokens = Lexer::new(text).tokens()?;
    let mut parser = Parser {
        tokens,
        idx: 0,
        end: text.len(),
    };
    let expr = parser.expr()?;
    if parser.idx != parser.tokens.len() {
        return err(parser.offset(), "unexpected trailing input");
    }
    Ok(expr)
}
