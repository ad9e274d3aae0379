use std::fmt;

use super::{BinaryOp, Expr, UnaryOp};
use crate::error::{Error, Result};

/// Syntax error with a 1-based source position.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

const MAX_EXPONENT: u32 = 1024;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, bool),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Sep,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> std::result::Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut line, mut col) = (1usize, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let push = |out: &mut Vec<Token>, tok| {
            out.push(Token {
                tok,
                line: tl,
                column: tc,
            })
        };
        match c {
            '\n' => {
                push(&mut out, Tok::Sep);
                line += 1;
                col = 1;
                i += 1;
                continue;
            }
            c if c.is_whitespace() => {}
            ';' => push(&mut out, Tok::Sep),
            '+' => push(&mut out, Tok::Plus),
            '-' => push(&mut out, Tok::Minus),
            '*' => push(&mut out, Tok::Star),
            '/' => push(&mut out, Tok::Slash),
            '^' => push(&mut out, Tok::Caret),
            '(' => push(&mut out, Tok::LParen),
            ')' => push(&mut out, Tok::RParen),
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                let mut integer = true;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    integer &= chars[i] != '.';
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        integer = false;
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let value: f64 = text.parse().map_err(|_| ParseError {
                    line: tl,
                    column: tc,
                    message: format!("malformed number '{text}'"),
                })?;
                push(&mut out, Tok::Num(value, integer));
                col += i - start;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                push(&mut out, Tok::Ident(text));
                col += i - start;
                continue;
            }
            other => {
                return Err(ParseError {
                    line: tl,
                    column: tc,
                    message: format!("unexpected character '{other}'"),
                })
            }
        }
        i += 1;
        col += 1;
    }
    out.push(Token {
        tok: Tok::End,
        line,
        column: col,
    });
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    dimension: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn next(&mut self) -> &Token {
        let t = &self.toks[self.pos];
        if t.tok != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn err(&self, message: impl Into<String>) -> Error {
        let t = &self.toks[self.pos];
        Error::Parse(ParseError {
            line: t.line,
            column: t.column,
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if *self.peek() == tok {
            self.next();
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?.0;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.unary()?.0;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    /// Returns the node and whether it is a bare numeric literal; `-` directly
    /// in front of a bare literal yields a negative constant.
    fn unary(&mut self) -> Result<(Expr, bool)> {
        match self.peek() {
            Tok::Minus => {
                self.next();
                let (inner, bare) = self.unary()?;
                match inner {
                    Expr::Const(c) if bare => Ok((Expr::Const(-c), false)),
                    inner => Ok((Expr::Unary(UnaryOp::Neg, Box::new(inner)), false)),
                }
            }
            Tok::Plus => {
                self.next();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<(Expr, bool)> {
        let (base, bare) = self.primary()?;
        if *self.peek() != Tok::Caret {
            return Ok((base, bare));
        }
        self.next();
        match self.peek().clone() {
            Tok::Num(v, true) if v <= MAX_EXPONENT as f64 => {
                self.next();
                Ok((Expr::Pow(Box::new(base), v as u32), false))
            }
            _ => Err(self.err(format!(
                "exponent must be a non-negative integer literal <= {MAX_EXPONENT}"
            ))),
        }
    }

    fn primary(&mut self) -> Result<(Expr, bool)> {
        let tok = self.peek().clone();
        match tok {
            Tok::Num(v, _) => {
                self.next();
                Ok((Expr::Const(v), true))
            }
            Tok::LParen => {
                self.next();
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok((e, false))
            }
            Tok::Ident(name) => {
                let func = match name.as_str() {
                    "sin" => Some(UnaryOp::Sin),
                    "cos" => Some(UnaryOp::Cos),
                    "exp" => Some(UnaryOp::Exp),
                    "ramp" => Some(UnaryOp::Ramp),
                    "step" => Some(UnaryOp::Step),
                    _ => None,
                };
                if let Some(op) = func {
                    self.next();
                    self.expect(Tok::LParen, &format!("'(' after {name}"))?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "')'")?;
                    return Ok((Expr::Unary(op, Box::new(arg)), false));
                }
                if name == "pi" {
                    self.next();
                    return Ok((Expr::Const(std::f64::consts::PI), false));
                }
                match self.variable(&name) {
                    Some(i) => {
                        self.next();
                        Ok((Expr::Var(i), false))
                    }
                    None => Err(self.err(format!("unknown identifier '{name}'"))),
                }
            }
            Tok::End | Tok::Sep => Err(self.err("unexpected end of expression")),
            _ => Err(self.err("expected an operand")),
        }
    }

    fn variable(&self, name: &str) -> Option<usize> {
        let n = self.dimension;
        let alias = match name {
            "x" => Some(0),
            "y" => Some(1),
            "z" => Some(2),
            _ => None,
        };
        if let Some(i) = alias {
            return (n <= 3 && i < n).then_some(i);
        }
        let digits = name.strip_prefix('x')?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
            return None;
        }
        let k: usize = digits.parse().ok()?;
        (k >= 1 && k <= n).then(|| k - 1)
    }
}

pub(super) fn parse_components(source: &str, dimension: usize) -> Result<Vec<Expr>> {
    let out = parse_list(source, dimension)?;
    if out.len() != dimension {
        return Err(Error::Arity {
            expected: dimension,
            found: out.len(),
        });
    }
    Ok(out)
}

/// Parses separated expressions over `dimension` variables without checking their count.
pub(super) fn parse_list(source: &str, dimension: usize) -> Result<Vec<Expr>> {
    let toks = lex(source).map_err(Error::Parse)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        dimension,
    };
    let mut out = Vec::new();
    loop {
        while *p.peek() == Tok::Sep {
            p.next();
        }
        if *p.peek() == Tok::End {
            break;
        }
        out.push(p.expr()?);
        match p.peek() {
            Tok::Sep | Tok::End => {}
            _ => return Err(p.err("expected operator, ';' or end of line")),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_err(src: &str, n: usize) -> ParseError {
        match parse_components(src, n) {
            Err(Error::Parse(e)) => e,
            other => panic!("expected parse error for {src:?}, got {other:?}"),
        }
    }

    #[test]
    fn aliases_and_indexed_names() {
        let a = parse_list("x + y*z", 3).unwrap();
        let b = parse_list("x1 + x2*x3", 3).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            parse_components("x; y; z; x4", 4),
            Err(Error::Parse(_))
        ));
        assert!(parse_components("x1;x2;x3;x4", 4).is_ok());
    }

    #[test]
    fn whitespace_and_separators() {
        let a = parse_components("-x;-(x^2+1)*y", 2).unwrap();
        let b = parse_components("  -x \n\n -( x ^ 2 + 1 ) * y \n", 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn error_positions() {
        let e = parse_err("x + y\ny * )", 2);
        assert_eq!((e.line, e.column), (2, 5));
        let e = parse_err("x; foo", 2);
        assert_eq!((e.line, e.column), (1, 4));
        assert!(e.message.contains("unknown identifier"));
        let e = parse_err("x^2.5", 1);
        assert!(e.message.contains("integer"));
        let e = parse_err("x $ y", 2);
        assert_eq!(e.column, 3);
    }

    #[test]
    fn arity_mismatch() {
        assert!(matches!(
            parse_components("x; y; x", 2),
            Err(Error::Arity {
                expected: 2,
                found: 3
            })
        ));
    }

    #[test]
    fn variable_out_of_range() {
        assert!(parse_list("x3", 2).is_err());
        assert!(parse_list("x0", 2).is_err());
    }
}
