//! Symbolic partial derivatives with light constant folding.

use super::{BinaryOp, Expression, UnaryOp};
use crate::scalar::Scalar;

fn is_const<T: Scalar>(e: &Expression<T>, v: f64) -> bool {
    matches!(e, Expression::Const(c) if c.f64() == v)
}

fn folded<T: Scalar>(v: T) -> Option<Expression<T>> {
    v.is_finite().then_some(Expression::Const(v))
}

fn zero<T: Scalar>() -> Expression<T> {
    Expression::Const(T::zero())
}

impl<T: Scalar> Expression<T> {
    fn s_unary(op: UnaryOp, a: Self) -> Self {
        if let Expression::Const(c) = a {
            if let Some(e) = folded(op.apply(c)) {
                return e;
            }
        }
        Self::unary(op, a)
    }

    fn s_binary(op: BinaryOp, a: Self, b: Self) -> Self {
        if let (Expression::Const(x), Expression::Const(y)) = (&a, &b) {
            if let Some(e) = folded(op.apply(*x, *y)) {
                return e;
            }
        }
        match op {
            BinaryOp::Add if is_const(&a, 0.0) => b,
            BinaryOp::Add if is_const(&b, 0.0) => a,
            BinaryOp::Sub if is_const(&b, 0.0) => a,
            BinaryOp::Sub if is_const(&a, 0.0) => Self::s_unary(UnaryOp::Neg, b),
            BinaryOp::Mul if is_const(&a, 0.0) || is_const(&b, 0.0) => zero(),
            BinaryOp::Mul if is_const(&a, 1.0) => b,
            BinaryOp::Mul if is_const(&b, 1.0) => a,
            BinaryOp::Div if is_const(&a, 0.0) => zero(),
            BinaryOp::Div if is_const(&b, 1.0) => a,
            _ => Self::binary(op, a, b),
        }
    }

    fn s_mul(a: Self, b: Self) -> Self {
        Self::s_binary(BinaryOp::Mul, a, b)
    }

    /// Exact symbolic derivative with respect to `x_{var}`.
    ///
    /// The result is lightly simplified (`0*e -> 0`, `e+0 -> e`, `1*e -> e`,
    /// folding of constant subtrees) but never canonicalized.
    pub fn partial_derivative(&self, var: usize) -> Self {
        match self {
            Expression::Const(_) => zero(),
            Expression::Var(k) => Expression::Const(if *k == var { T::one() } else { T::zero() }),
            Expression::Binary(op, a, b) => {
                let da = a.partial_derivative(var);
                let db = b.partial_derivative(var);
                let (a, b) = (a.as_ref().clone(), b.as_ref().clone());
                match op {
                    BinaryOp::Add | BinaryOp::Sub => Self::s_binary(*op, da, db),
                    BinaryOp::Mul => Self::s_binary(
                        BinaryOp::Add,
                        Self::s_mul(da, b),
                        Self::s_mul(a, db),
                    ),
                    BinaryOp::Div => {
                        let num = Self::s_binary(
                            BinaryOp::Sub,
                            Self::s_mul(da, b.clone()),
                            Self::s_mul(a, db),
                        );
                        Self::s_binary(BinaryOp::Div, num, Self::s_unary(UnaryOp::Pow2, b))
                    }
                }
            }
            Expression::Unary(op, a) => {
                let da = a.partial_derivative(var);
                if is_const(&da, 0.0) {
                    return zero();
                }
                let a = a.as_ref().clone();
                let outer = match op {
                    UnaryOp::Neg => return Self::s_unary(UnaryOp::Neg, da),
                    UnaryOp::Sin => Self::s_unary(UnaryOp::Cos, a),
                    UnaryOp::Cos => Self::s_unary(UnaryOp::Neg, Self::s_unary(UnaryOp::Sin, a)),
                    UnaryOp::Exp => Self::s_unary(UnaryOp::Exp, a),
                    UnaryOp::Log => return Self::s_binary(BinaryOp::Div, da, a),
                    UnaryOp::Sqrt => {
                        let denom = Self::s_mul(Expression::Const(T::of(2.0)), Self::s_unary(UnaryOp::Sqrt, a));
                        return Self::s_binary(BinaryOp::Div, da, denom);
                    }
                    UnaryOp::Inv => {
                        return Self::s_binary(
                            BinaryOp::Div,
                            Self::s_unary(UnaryOp::Neg, da),
                            Self::s_unary(UnaryOp::Pow2, a),
                        )
                    }
                    UnaryOp::Pow2 => Self::s_mul(Expression::Const(T::of(2.0)), a),
                    UnaryOp::Pow3 => {
                        Self::s_mul(Expression::Const(T::of(3.0)), Self::s_unary(UnaryOp::Pow2, a))
                    }
                };
                Self::s_mul(outer, da)
            }
        }
    }
}
