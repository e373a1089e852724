//! Infix reader for report-style formulas such as `2.1 * x_0 - 0.5 * x_0^2`.
//!
//! Grammar (loosest to tightest): `+ -`, `* /`, unary `-`, `^2 | ^3`, atoms.
//! Atoms are numbers, `x_k` (or `xk`), function calls `name(expr)` and
//! parenthesized expressions. `×` and `−` are accepted as `*` and `-`.

use thiserror::Error;

use super::{BinaryOp, Expression, OdeSystem, UnaryOp};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("infix parse error at byte {pos}: {msg}")]
pub struct InfixError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, InfixError> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, ch) = chars[i];
        match ch {
            c if c.is_whitespace() => i += 1,
            '(' => {
                out.push((pos, Tok::LParen));
                i += 1;
            }
            ')' => {
                out.push((pos, Tok::RParen));
                i += 1;
            }
            '+' | '-' | '*' | '/' | '^' | '×' | '−' => {
                let op = match ch {
                    '×' => '*',
                    '−' => '-',
                    c => c,
                };
                out.push((pos, Tok::Op(op)));
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                    i += 1;
                }
                // exponent part: e, E followed by optional sign and digits
                if i < chars.len() && matches!(chars[i].1, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && matches!(chars[j].1, '+' | '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].1.is_ascii_digit() {
                        while j < chars.len() && chars[j].1.is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let end = chars.get(i).map_or(src.len(), |c| c.0);
                let text = &src[chars[start].0..end];
                let v: f64 = text.parse().map_err(|_| InfixError {
                    pos,
                    msg: format!("bad number {text:?}"),
                })?;
                out.push((pos, Tok::Num(v)));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                    i += 1;
                }
                let end = chars.get(i).map_or(src.len(), |c| c.0);
                out.push((pos, Tok::Ident(src[chars[start].0..end].to_string())));
            }
            c => {
                return Err(InfixError {
                    pos,
                    msg: format!("unexpected character {c:?}"),
                })
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.1)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |t| t.0)
    }

    fn err<R>(&self, msg: impl Into<String>) -> Result<R, InfixError> {
        Err(InfixError {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn expr<T: Scalar>(&mut self) -> Result<Expression<T>, InfixError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinaryOp::Add } else { BinaryOp::Sub };
            self.at += 1;
            let rhs = self.term()?;
            lhs = Expression::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term<T: Scalar>(&mut self) -> Result<Expression<T>, InfixError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinaryOp::Mul } else { BinaryOp::Div };
            self.at += 1;
            let rhs = self.unary()?;
            lhs = Expression::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary<T: Scalar>(&mut self) -> Result<Expression<T>, InfixError> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.at += 1;
            // a literal directly after the minus is a negative constant
            if let Some(Tok::Num(v)) = self.peek() {
                let v = *v;
                if !matches!(self.toks.get(self.at + 1).map(|t| &t.1), Some(Tok::Op('^'))) {
                    self.at += 1;
                    return Ok(Expression::Const(T::of(-v)));
                }
            }
            let inner = self.unary()?;
            return Ok(Expression::unary(UnaryOp::Neg, inner));
        }
        if let Some(Tok::Op('+')) = self.peek() {
            self.at += 1;
            return self.unary();
        }
        self.power()
    }

    fn power<T: Scalar>(&mut self) -> Result<Expression<T>, InfixError> {
        let mut base = self.atom()?;
        while let Some(Tok::Op('^')) = self.peek() {
            self.at += 1;
            match self.peek() {
                Some(Tok::Num(v)) if *v == 2.0 => base = Expression::unary(UnaryOp::Pow2, base),
                Some(Tok::Num(v)) if *v == 3.0 => base = Expression::unary(UnaryOp::Pow3, base),
                _ => return self.err("only ^2 and ^3 are supported"),
            }
            self.at += 1;
        }
        Ok(base)
    }

    fn atom<T: Scalar>(&mut self) -> Result<Expression<T>, InfixError> {
        let tok = match self.peek() {
            Some(t) => t.clone(),
            None => return self.err("unexpected end of input"),
        };
        match tok {
            Tok::Num(v) => {
                self.at += 1;
                Ok(Expression::Const(T::of(v)))
            }
            Tok::LParen => {
                self.at += 1;
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(k) = parse_var(&name) {
                    self.at += 1;
                    return Ok(Expression::Var(k));
                }
                let Some(op) = UnaryOp::from_name(&name) else {
                    return self.err(format!("unknown identifier {name:?}"));
                };
                self.at += 1;
                if self.peek() != Some(&Tok::LParen) {
                    return self.err(format!("expected '(' after {name}"));
                }
                self.at += 1;
                let arg = self.expr()?;
                self.expect_rparen()?;
                Ok(Expression::unary(op, arg))
            }
            Tok::RParen | Tok::Op(_) => self.err("expected an operand"),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), InfixError> {
        if self.peek() == Some(&Tok::RParen) {
            self.at += 1;
            Ok(())
        } else {
            self.err("expected ')'")
        }
    }
}

fn parse_var(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("x_").or_else(|| name.strip_prefix('x'))?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

pub fn parse_infix<T: Scalar>(src: &str) -> Result<Expression<T>, InfixError> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        at: 0,
        end: src.len(),
    };
    let e = p.expr()?;
    if p.at != p.toks.len() {
        return p.err("unexpected trailing input");
    }
    Ok(e)
}

/// Parses equations separated by `|` (or `;`) into a system.
pub fn parse_infix_system<T: Scalar>(src: &str) -> Result<OdeSystem<T>, InfixError> {
    let mut eqs = Vec::new();
    let mut offset = 0;
    for part in src.split(['|', ';']) {
        let e = parse_infix(part).map_err(|mut e| {
            e.pos += offset;
            e
        })?;
        eqs.push(e);
        offset += part.len() + 1;
    }
    OdeSystem::new(eqs).map_err(|e| InfixError {
        pos: 0,
        msg: e.to_string(),
    })
}
