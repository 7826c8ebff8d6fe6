//! Infix text format.
//!
//! Grammar (loosest to tightest binding):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '·' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := atom ('^' unary)?
//! atom    := number | 'x' digits | name '(' sum ')' | '(' sum ')' | '|' sum '|'
//! ```
//!
//! `−` (U+2212) is accepted for minus. A literal integer exponent `>= 2`
//! produces an integer power; any other exponent produces a real power.

use std::fmt;

use thiserror::Error;

use super::{BinaryOp, Expr, UnaryFn};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownFunction { offset, .. } => {
                *offset
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Bar,
    End,
}

struct Lexer {
    toks: Vec<(Tok, usize)>,
}

fn lex(src: &str) -> Result<Lexer, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '+' => toks.push((Tok::Plus, start)),
            '-' | '\u{2212}' => toks.push((Tok::Minus, start)),
            '*' | '\u{00b7}' | '\u{22c5}' | '\u{d7}' => toks.push((Tok::Star, start)),
            '/' => toks.push((Tok::Slash, start)),
            '^' => toks.push((Tok::Caret, start)),
            '(' => toks.push((Tok::LParen, start)),
            ')' => toks.push((Tok::RParen, start)),
            '|' => toks.push((Tok::Bar, start)),
            c if c.is_ascii_digit() || c == '.' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                    j += 1;
                }
                if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        while k < chars.len() && chars[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let text: String = chars[i..j].iter().collect();
                let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    offset: start,
                    message: format!("invalid number `{text}`"),
                })?;
                toks.push((Tok::Num(v), start));
                i = j;
                continue;
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                toks.push((Tok::Ident(chars[i..j].iter().collect()), start));
                i = j;
                continue;
            }
            other => {
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
        i += 1;
    }
    toks.push((Tok::End, chars.len()));
    Ok(Lexer { toks })
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {what}"))
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.product()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                let inner = self.unary()?;
                Ok(match inner {
                    Expr::Const(v) => Expr::Const(-v),
                    other => Expr::unary(UnaryFn::Neg, other),
                })
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let exponent = self.unary()?;
        Ok(match exponent {
            Expr::Const(n) if n >= 2.0 && n <= u32::MAX as f64 && n.fract() == 0.0 => {
                Expr::unary(UnaryFn::PowInt(n as u32), base)
            }
            e => Expr::binary(BinaryOp::Pow, base, e),
        })
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let start = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::LParen => {
                let e = self.sum()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Bar => {
                let e = self.sum()?;
                self.expect(Tok::Bar, "closing `|`")?;
                Ok(Expr::unary(UnaryFn::Abs, e))
            }
            Tok::Ident(name) => {
                if let Some(idx) = variable_index(&name) {
                    return Ok(Expr::Var(idx));
                }
                if *self.peek() != Tok::LParen {
                    return Err(ParseError::UnknownFunction {
                        name,
                        offset: start,
                    });
                }
                let f = function_by_name(&name).ok_or(ParseError::UnknownFunction {
                    name: name.clone(),
                    offset: start,
                })?;
                self.bump();
                let arg = self.sum()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Expr::unary(f, arg))
            }
            Tok::End => Err(ParseError::Syntax {
                offset: start,
                message: "unexpected end of input".into(),
            }),
            t => Err(ParseError::Syntax {
                offset: start,
                message: format!("unexpected token {t:?}"),
            }),
        }
    }
}

fn variable_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn function_by_name(name: &str) -> Option<UnaryFn> {
    Some(match name {
        "exp" => UnaryFn::Exp,
        "sqrt" => UnaryFn::SqrtAbs,
        "abs" => UnaryFn::Abs,
        "sgn" | "sign" => UnaryFn::Sign,
        "neg" => UnaryFn::Neg,
        "square" => UnaryFn::PowInt(2),
        "cube" => UnaryFn::PowInt(3),
        _ => return None,
    })
}

/// Parses the infix text format.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let lexer = lex(text)?;
    let mut p = Parser {
        toks: lexer.toks,
        pos: 0,
    };
    let e = p.sum()?;
    if *p.peek() != Tok::End {
        return p.error("trailing input");
    }
    Ok(e)
}

// Binding strength used by the printer; larger binds tighter.
const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_POWER: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Const(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => PREC_UNARY,
        Expr::Const(_) | Expr::Var(_) => PREC_ATOM,
        Expr::Unary(UnaryFn::Neg, _) => PREC_UNARY,
        Expr::Unary(UnaryFn::PowInt(_), _) => PREC_POWER,
        Expr::Unary(_, _) => PREC_ATOM,
        Expr::Binary(BinaryOp::Add | BinaryOp::Sub, _, _) => PREC_SUM,
        Expr::Binary(BinaryOp::Mul | BinaryOp::Div, _, _) => PREC_PRODUCT,
        Expr::Binary(BinaryOp::Pow, _, _) => PREC_POWER,
    }
}

fn write_wrapped(e: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if precedence(e) < min_prec {
        f.write_str("(")?;
        write_expr(e, f)?;
        f.write_str(")")
    } else {
        write_expr(e, f)
    }
}

pub(super) fn write_expr(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        // `{:?}` is the shortest representation that parses back exactly.
        Expr::Const(v) => write!(f, "{v:?}"),
        Expr::Var(i) => write!(f, "x{i}"),
        Expr::Unary(UnaryFn::Neg, c) => {
            f.write_str("-")?;
            // `-` followed by a literal would re-parse as a single constant,
            // and `--x` is valid but unreadable.
            let min = match c.as_ref() {
                Expr::Const(_) | Expr::Unary(UnaryFn::Neg, _) => PREC_ATOM,
                _ => PREC_UNARY,
            };
            write_wrapped(c, min, f)
        }
        Expr::Unary(UnaryFn::PowInt(n), c) => {
            write_wrapped(c, PREC_ATOM, f)?;
            write!(f, "^{n}")
        }
        Expr::Unary(func, c) => {
            write!(f, "{}(", func.name())?;
            write_expr(c, f)?;
            f.write_str(")")
        }
        Expr::Binary(op, a, b) => {
            let (sym, lmin, rmin) = match op {
                BinaryOp::Add => (" + ", PREC_SUM, PREC_PRODUCT),
                BinaryOp::Sub => (" - ", PREC_SUM, PREC_PRODUCT),
                BinaryOp::Mul => (" * ", PREC_PRODUCT, PREC_UNARY),
                BinaryOp::Div => (" / ", PREC_PRODUCT, PREC_UNARY),
                BinaryOp::Pow => ("^", PREC_ATOM, PREC_ATOM),
            };
            // A signed constant on the right of +/- keeps its sign: `x0 + -2`.
            let rmin = match (op, b.as_ref()) {
                (BinaryOp::Add | BinaryOp::Sub, Expr::Const(_)) => PREC_UNARY,
                _ => rmin,
            };
            write_wrapped(a, lmin, f)?;
            f.write_str(sym)?;
            write_wrapped(b, rmin, f)
        }
    }
}
