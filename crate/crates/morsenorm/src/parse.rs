//! Recursive-descent parser for the polynomial expression language used in
//! problem files.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary ('*' unary)*
//! unary  := ('+' | '-')* factor
//! factor := atom ('^' integer)?
//! atom   := rational | variable | '(' expr ')'
//! ```
//!
//! Variables are `x1 … xn`; literals are integers or `p/q` rationals;
//! exponents are non-negative integers. Exponents above the truncation
//! order are legal but flag the result as truncated.

use std::fmt;

use thiserror::Error;

use crate::coeff::Rat;
use crate::jet::Jet;
use crate::multi_index::MultiIndex;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("parse error at byte {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl ParseError {
    fn new(position: usize, message: impl Into<String>) -> Self {
        ParseError {
            position,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
    /// Integer or `p/q` literal.
    Number(i64, i64),
    /// 0-based variable index.
    Var(usize),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Plus => write!(f, "'+'"),
            Token::Minus => write!(f, "'-'"),
            Token::Star => write!(f, "'*'"),
            Token::Caret => write!(f, "'^'"),
            Token::LParen => write!(f, "'('"),
            Token::RParen => write!(f, "')'"),
            Token::Number(p, q) if *q == 1 => write!(f, "number {p}"),
            Token::Number(p, q) => write!(f, "number {p}/{q}"),
            Token::Var(i) => write!(f, "variable x{}", i + 1),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    n: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str, n: usize) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            n,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn integer(&mut self) -> Result<i64, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse::<i64>()
            .map_err(|_| ParseError::new(start, "integer literal out of range"))
    }

    /// Next token with its start position; `None` at end of input.
    fn next(&mut self) -> Result<Option<(usize, Token)>, ParseError> {
        self.skip_ws();
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let start = self.pos;
        let b = self.src[self.pos];
        let tok = match b {
            b'+' => {
                self.pos += 1;
                Token::Plus
            }
            b'-' => {
                self.pos += 1;
                Token::Minus
            }
            b'*' => {
                self.pos += 1;
                Token::Star
            }
            b'^' => {
                self.pos += 1;
                Token::Caret
            }
            b'(' => {
                self.pos += 1;
                Token::LParen
            }
            b')' => {
                self.pos += 1;
                Token::RParen
            }
            b'0'..=b'9' => {
                let num = self.integer()?;
                // A '/' directly after an integer is a rational literal.
                if self.pos < self.src.len() && self.src[self.pos] == b'/' {
                    self.pos += 1;
                    if self.pos >= self.src.len() || !self.src[self.pos].is_ascii_digit() {
                        return Err(ParseError::new(
                            self.pos,
                            "expected denominator digits after '/'",
                        ));
                    }
                    let den = self.integer()?;
                    if den == 0 {
                        return Err(ParseError::new(start, "zero denominator"));
                    }
                    Token::Number(num, den)
                } else {
                    Token::Number(num, 1)
                }
            }
            b'x' | b'X' => {
                self.pos += 1;
                if self.pos >= self.src.len() || !self.src[self.pos].is_ascii_digit() {
                    return Err(ParseError::new(
                        start,
                        "expected a variable index after 'x' (variables are x1..xn)",
                    ));
                }
                let idx = self.integer()?;
                if idx < 1 || idx as usize > self.n {
                    return Err(ParseError::new(
                        start,
                        format!(
                            "unknown variable x{idx}; this problem has dimension {}",
                            self.n
                        ),
                    ));
                }
                Token::Var(idx as usize - 1)
            }
            _ => {
                return Err(ParseError::new(
                    start,
                    format!("unexpected character {:?}", b as char),
                ))
            }
        };
        Ok(Some((start, tok)))
    }
}

/// Result of parsing: the expanded jet plus a truncation flag set when some
/// expanded term exceeded the requested order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedJet {
    pub jet: Jet<Rat>,
    pub truncated: bool,
}

/// A sub-expression value: the truncated jet plus an upper bound on the
/// total degree of the *untruncated* expansion. The bound is what makes the
/// truncation flag reliable — products can push content past the order
/// without leaving a trace in the truncated coefficients.
struct Value {
    jet: Jet<Rat>,
    degree_bound: u32,
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    cursor: usize,
    end: usize,
    n: usize,
    order: u32,
}

impl Parser {
    fn peek(&self) -> Option<&(usize, Token)> {
        self.tokens.get(self.cursor)
    }

    fn bump(&mut self) -> Option<(usize, Token)> {
        let t = self.tokens.get(self.cursor).cloned();
        if t.is_some() {
            self.cursor += 1;
        }
        t
    }

    fn expect(&mut self, tok: &Token) -> Result<(), ParseError> {
        match self.bump() {
            Some((_, t)) if &t == tok => Ok(()),
            Some((p, t)) => Err(ParseError::new(p, format!("expected {tok}, found {t}"))),
            None => Err(ParseError::new(
                self.end,
                format!("expected {tok}, found end of input"),
            )),
        }
    }

    fn expr(&mut self) -> Result<Value, ParseError> {
        let mut acc = self.term()?;
        while let Some((_, tok)) = self.peek() {
            match tok {
                Token::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    acc = Value {
                        jet: acc.jet.add(&rhs.jet).expect("same dims"),
                        degree_bound: acc.degree_bound.max(rhs.degree_bound),
                    };
                }
                Token::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    acc = Value {
                        jet: acc.jet.sub(&rhs.jet).expect("same dims"),
                        degree_bound: acc.degree_bound.max(rhs.degree_bound),
                    };
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Value, ParseError> {
        let mut acc = self.unary()?;
        while let Some((_, Token::Star)) = self.peek() {
            self.bump();
            let rhs = self.unary()?;
            acc = Value {
                jet: acc.jet.mul(&rhs.jet).expect("same dims"),
                degree_bound: acc.degree_bound.saturating_add(rhs.degree_bound),
            };
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Value, ParseError> {
        let mut negate = false;
        while let Some((_, tok)) = self.peek() {
            match tok {
                Token::Minus => {
                    negate = !negate;
                    self.bump();
                }
                Token::Plus => {
                    self.bump();
                }
                _ => break,
            }
        }
        let mut v = self.factor()?;
        if negate {
            v.jet = v.jet.neg();
        }
        Ok(v)
    }

    fn factor(&mut self) -> Result<Value, ParseError> {
        let base = self.atom()?;
        if let Some((_, Token::Caret)) = self.peek() {
            self.bump();
            let (pos, tok) = self.bump().ok_or_else(|| {
                ParseError::new(self.end, "expected an integer exponent after '^'")
            })?;
            let e = match tok {
                Token::Number(p, 1) if p >= 0 => p as u32,
                other => {
                    return Err(ParseError::new(
                        pos,
                        format!("expected a non-negative integer exponent, found {other}"),
                    ))
                }
            };
            return Ok(Value {
                jet: base.jet.pow(e).expect("same dims"),
                degree_bound: base.degree_bound.saturating_mul(e),
            });
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Value, ParseError> {
        match self.bump() {
            Some((_, Token::Number(p, q))) => Ok(Value {
                jet: Jet::constant(Rat::new(p, q), self.n, self.order),
                degree_bound: 0,
            }),
            Some((_, Token::Var(i))) => Ok(Value {
                jet: Jet::variable(i, self.n, self.order),
                degree_bound: 1,
            }),
            Some((_, Token::LParen)) => {
                let inner = self.expr()?;
                self.expect(&Token::RParen)?;
                Ok(inner)
            }
            Some((p, tok)) => Err(ParseError::new(
                p,
                format!("expected a number, variable, or '(', found {tok}"),
            )),
            None => Err(ParseError::new(
                self.end,
                "expected a number, variable, or '(', found end of input",
            )),
        }
    }
}

/// Parse `text` into a jet in `n` variables at truncation order `order`.
///
/// `truncated` is set when the untruncated expansion could carry terms of
/// total degree above `order` (upper-bound test, so cancellations may flag
/// conservatively; the kept coefficients are always exact).
pub fn parse_expression(text: &str, n: usize, order: u32) -> Result<ParsedJet, ParseError> {
    let mut lexer = Lexer::new(text, n);
    let mut tokens = Vec::new();
    while let Some(t) = lexer.next()? {
        tokens.push(t);
    }
    let end = text.len();
    let mut parser = Parser {
        tokens,
        cursor: 0,
        end,
        n,
        order,
    };
    let value = parser.expr()?;
    if let Some((p, tok)) = parser.peek() {
        return Err(ParseError::new(*p, format!("unexpected {tok}")));
    }
    Ok(ParsedJet {
        jet: value.jet,
        truncated: value.degree_bound > order,
    })
}

/// Canonical printer for rational jets; `parse_expression` of the output
/// reproduces the jet exactly (round-trip property).
pub fn print_jet(jet: &Jet<Rat>) -> String {
    if jet.is_zero() {
        return "0".to_string();
    }
    let mut out = String::new();
    for (idx, (a, c)) in jet.terms().enumerate() {
        let neg = c.is_negative();
        let mag = c.abs();
        if idx == 0 {
            if neg {
                out.push_str("-");
            }
        } else if neg {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        let coeff_str = mag.to_string();
        if a.degree() == 0 {
            out.push_str(&coeff_str);
        } else {
            let var_str = monomial_expr(a);
            if coeff_str == "1" {
                out.push_str(&var_str);
            } else {
                out.push_str(&coeff_str);
                out.push('*');
                out.push_str(&var_str);
            }
        }
    }
    out
}

fn monomial_expr(a: &MultiIndex) -> String {
    let mut parts = Vec::new();
    for i in 0..a.len() {
        let e = a.get(i);
        if e == 0 {
            continue;
        }
        if e == 1 {
            parts.push(format!("x{}", i + 1));
        } else {
            parts.push(format!("x{}^{}", i + 1, e));
        }
    }
    parts.join("*")
}
