//! Immutable operator trees for the right-hand sides of ODE systems.
//!
//! An [`Expression`] is a finite tree whose internal nodes are the binary
//! operators `add, sub, mul, div` or the unary operators
//! `neg, sin, cos, exp, log, sqrt, inv, pow2, pow3`, and whose leaves are
//! variables `x_k` or finite real constants. An [`OdeSystem`] is an ordered
//! list of `d` such trees over `x_0 .. x_{d-1}` describing `dx/dt = f(x)`.

mod diff;
mod infix;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use infix::{parse_infix, parse_infix_system, InfixError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Inv,
    Pow2,
    Pow3,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 4] = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div];

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }

    #[inline]
    pub fn apply<T: Scalar>(self, a: T, b: T) -> T {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
        }
    }
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 9] = [
        UnaryOp::Neg,
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Exp,
        UnaryOp::Log,
        UnaryOp::Sqrt,
        UnaryOp::Inv,
        UnaryOp::Pow2,
        UnaryOp::Pow3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Inv => "inv",
            UnaryOp::Pow2 => "pow2",
            UnaryOp::Pow3 => "pow3",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }

    #[inline]
    pub fn apply<T: Scalar>(self, a: T) -> T {
        match self {
            UnaryOp::Neg => -a,
            UnaryOp::Sin => a.sin(),
            UnaryOp::Cos => a.cos(),
            UnaryOp::Exp => a.exp(),
            UnaryOp::Log => a.ln(),
            UnaryOp::Sqrt => a.sqrt(),
            UnaryOp::Inv => a.recip(),
            UnaryOp::Pow2 => a * a,
            UnaryOp::Pow3 => a * a * a,
        }
    }
}

/// Symbolic expression tree over variables `x_0, x_1, ...`.
///
/// Trees are never mutated in place; every transformation returns a new tree.
/// Constants are expected to be finite: trees built by the parsers and the
/// generator guarantee it, and [`Expression::validate`] checks it for trees
/// assembled by hand.
#[derive(Debug, Clone, PartialEq)]
pub enum Expression<T> {
    Const(T),
    Var(usize),
    Unary(UnaryOp, Box<Expression<T>>),
    Binary(BinaryOp, Box<Expression<T>>, Box<Expression<T>>),
}

/// One element of a prefix (Polish) traversal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Symbol<T> {
    Binary(BinaryOp),
    Unary(UnaryOp),
    Var(usize),
    Const(T),
}

impl<T> Symbol<T> {
    pub fn arity(&self) -> usize {
        match self {
            Symbol::Binary(_) => 2,
            Symbol::Unary(_) => 1,
            Symbol::Var(_) | Symbol::Const(_) => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("incomplete expression at position {0}")]
    Incomplete(usize),
    #[error("unexpected trailing symbols at position {0}")]
    Trailing(usize),
    #[error("empty expression")]
    Empty,
    #[error("non-finite constant {0}")]
    NonFiniteConstant(String),
    #[error("variable x_{index} out of range for dimension {dim}")]
    VariableOutOfRange { index: usize, dim: usize },
    #[error("a system needs at least one equation")]
    NoEquations,
}

impl<T: Scalar> Expression<T> {
    pub fn constant(value: T) -> Result<Self, ExprError> {
        if value.is_finite() {
            Ok(Expression::Const(value))
        } else {
            Err(ExprError::NonFiniteConstant(value.to_string()))
        }
    }

    pub fn var(index: usize) -> Self {
        Expression::Var(index)
    }

    pub fn unary(op: UnaryOp, arg: Self) -> Self {
        Expression::Unary(op, Box::new(arg))
    }

    pub fn binary(op: BinaryOp, lhs: Self, rhs: Self) -> Self {
        Expression::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Recursive evaluation at `point`. Non-finite results (log of a negative
    /// number, division by zero) are returned as values.
    ///
    /// Panics if the tree references a variable beyond `point.len()`.
    pub fn evaluate(&self, point: &[T]) -> T {
        match self {
            Expression::Const(c) => *c,
            Expression::Var(k) => point[*k],
            Expression::Unary(op, a) => op.apply(a.evaluate(point)),
            Expression::Binary(op, a, b) => op.apply(a.evaluate(point), b.evaluate(point)),
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expression::Const(_) => None,
            Expression::Var(k) => Some(*k),
            Expression::Unary(_, a) => a.max_var(),
            Expression::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn has_var(&self) -> bool {
        self.max_var().is_some()
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expression::Const(_) | Expression::Var(_) => 1,
            Expression::Unary(_, a) => 1 + a.node_count(),
            Expression::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
        }
    }

    /// Number of operator levels; a bare leaf has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Expression::Const(_) | Expression::Var(_) => 0,
            Expression::Unary(_, a) => 1 + a.depth(),
            Expression::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Checks constant finiteness and that variables stay below `dim`.
    pub fn validate(&self, dim: usize) -> Result<(), ExprError> {
        match self {
            Expression::Const(c) if !c.is_finite() => {
                Err(ExprError::NonFiniteConstant(c.to_string()))
            }
            Expression::Const(_) => Ok(()),
            Expression::Var(k) if *k >= dim => {
                Err(ExprError::VariableOutOfRange { index: *k, dim })
            }
            Expression::Var(_) => Ok(()),
            Expression::Unary(_, a) => a.validate(dim),
            Expression::Binary(_, a, b) => {
                a.validate(dim)?;
                b.validate(dim)
            }
        }
    }

    pub fn to_prefix(&self) -> Vec<Symbol<T>> {
        let mut out = Vec::with_capacity(self.node_count());
        self.push_prefix(&mut out);
        out
    }

    fn push_prefix(&self, out: &mut Vec<Symbol<T>>) {
        match self {
            Expression::Const(c) => out.push(Symbol::Const(*c)),
            Expression::Var(k) => out.push(Symbol::Var(*k)),
            Expression::Unary(op, a) => {
                out.push(Symbol::Unary(*op));
                a.push_prefix(out);
            }
            Expression::Binary(op, a, b) => {
                out.push(Symbol::Binary(*op));
                a.push_prefix(out);
                b.push_prefix(out);
            }
        }
    }

    /// Parses a complete prefix traversal. Positions in errors count symbols
    /// from zero; an incomplete input reports the position one past its end.
    pub fn from_prefix(symbols: &[Symbol<T>]) -> Result<Self, ExprError> {
        if symbols.is_empty() {
            return Err(ExprError::Empty);
        }
        let mut pos = 0;
        let expr = Self::parse_prefix_at(symbols, &mut pos)?;
        if pos != symbols.len() {
            return Err(ExprError::Trailing(pos));
        }
        Ok(expr)
    }

    fn parse_prefix_at(symbols: &[Symbol<T>], pos: &mut usize) -> Result<Self, ExprError> {
        let sym = *symbols.get(*pos).ok_or(ExprError::Incomplete(*pos))?;
        *pos += 1;
        Ok(match sym {
            Symbol::Const(c) => Self::constant(c)?,
            Symbol::Var(k) => Expression::Var(k),
            Symbol::Unary(op) => Self::unary(op, Self::parse_prefix_at(symbols, pos)?),
            Symbol::Binary(op) => {
                let a = Self::parse_prefix_at(symbols, pos)?;
                let b = Self::parse_prefix_at(symbols, pos)?;
                Self::binary(op, a, b)
            }
        })
    }

    /// Applies `f` to every constant, keeping the tree shape.
    pub fn map_constants(&self, f: &impl Fn(T) -> T) -> Self {
        match self {
            Expression::Const(c) => Expression::Const(f(*c)),
            Expression::Var(k) => Expression::Var(*k),
            Expression::Unary(op, a) => Self::unary(*op, a.map_constants(f)),
            Expression::Binary(op, a, b) => Self::binary(*op, a.map_constants(f), b.map_constants(f)),
        }
    }

    /// Replaces every `x_k` by `replacements[k]`.
    pub fn substitute(&self, replacements: &[Expression<T>]) -> Self {
        match self {
            Expression::Const(c) => Expression::Const(*c),
            Expression::Var(k) => replacements[*k].clone(),
            Expression::Unary(op, a) => Self::unary(*op, a.substitute(replacements)),
            Expression::Binary(op, a, b) => {
                Self::binary(*op, a.substitute(replacements), b.substitute(replacements))
            }
        }
    }

    /// Converts the constants to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Expression<U> {
        match self {
            Expression::Const(c) => Expression::Const(U::of(c.f64())),
            Expression::Var(k) => Expression::Var(*k),
            Expression::Unary(op, a) => Expression::Unary(*op, Box::new(a.cast())),
            Expression::Binary(op, a, b) => {
                Expression::Binary(*op, Box::new(a.cast()), Box::new(b.cast()))
            }
        }
    }

    /// Space-separated prefix rendering, e.g. `add x_0 mul 0.1 x_1`.
    pub fn prefix_string(&self) -> String {
        self.to_prefix()
            .iter()
            .map(|s| match s {
                Symbol::Binary(op) => op.name().to_string(),
                Symbol::Unary(op) => op.name().to_string(),
                Symbol::Var(k) => format!("x_{k}"),
                Symbol::Const(c) => c.to_string(),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn precedence(&self) -> u8 {
        match self {
            Expression::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
            Expression::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
            Expression::Unary(UnaryOp::Neg, _) => 3,
            Expression::Const(c) if c.is_sign_negative() => 3,
            Expression::Unary(UnaryOp::Pow2 | UnaryOp::Pow3, _) => 4,
            _ => 5,
        }
    }
}

impl<T: Scalar> fmt::Display for Expression<T> {
    /// Infix rendering that [`parse_infix`] reads back.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn wrap<T: Scalar>(
            f: &mut fmt::Formatter<'_>,
            e: &Expression<T>,
            parens: bool,
        ) -> fmt::Result {
            if parens {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expression::Const(c) => write!(f, "{c}"),
            Expression::Var(k) => write!(f, "x_{k}"),
            Expression::Unary(UnaryOp::Neg, a) => {
                f.write_str("-")?;
                wrap(f, a, a.precedence() < 4 || matches!(**a, Expression::Const(_)))
            }
            Expression::Unary(op @ (UnaryOp::Pow2 | UnaryOp::Pow3), a) => {
                wrap(f, a, a.precedence() <= 4)?;
                write!(f, "^{}", if *op == UnaryOp::Pow2 { 2 } else { 3 })
            }
            Expression::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Expression::Binary(op, a, b) => {
                let p = self.precedence();
                let sym = match op {
                    BinaryOp::Add => "+",
                    BinaryOp::Sub => "-",
                    BinaryOp::Mul => "*",
                    BinaryOp::Div => "/",
                };
                wrap(f, a, a.precedence() < p)?;
                write!(f, " {sym} ")?;
                wrap(f, b, b.precedence() <= p)
            }
        }
    }
}

/// Right-hand side `f` of the autonomous system `dx/dt = f(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSystem<T> {
    equations: Vec<Expression<T>>,
}

impl<T: Scalar> OdeSystem<T> {
    /// Builds a system of dimension `equations.len()`; every equation may only
    /// reference `x_0 .. x_{d-1}` and must hold finite constants.
    pub fn new(equations: Vec<Expression<T>>) -> Result<Self, ExprError> {
        if equations.is_empty() {
            return Err(ExprError::NoEquations);
        }
        let dim = equations.len();
        for eq in &equations {
            eq.validate(dim)?;
        }
        Ok(Self { equations })
    }

    pub fn dim(&self) -> usize {
        self.equations.len()
    }

    pub fn equations(&self) -> &[Expression<T>] {
        &self.equations
    }

    pub fn eval(&self, point: &[T]) -> Vec<T> {
        self.equations.iter().map(|e| e.evaluate(point)).collect()
    }

    /// Allocation-free variant of [`OdeSystem::eval`].
    pub fn eval_into(&self, point: &[T], out: &mut [T]) {
        for (o, e) in out.iter_mut().zip(&self.equations) {
            *o = e.evaluate(point);
        }
    }

    pub fn map_constants(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            equations: self.equations.iter().map(|e| e.map_constants(&f)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> OdeSystem<U> {
        OdeSystem {
            equations: self.equations.iter().map(|e| e.cast()).collect(),
        }
    }

    /// Equations rendered in prefix form and joined by ` | `.
    pub fn prefix_string(&self) -> String {
        self.equations
            .iter()
            .map(|e| e.prefix_string())
            .collect::<Vec<_>>()
            .join(" | ")
    }
}

impl<T: Scalar> fmt::Display for OdeSystem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.equations.iter().enumerate() {
            if i > 0 {
                f.write_str(" | ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}
