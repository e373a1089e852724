use ddot_core::expr::*;

fn c(v: f64) -> Expression<f64> {
    Expression::Const(v)
}
fn x(k: usize) -> Expression<f64> {
    Expression::Var(k)
}
fn bin(op: BinaryOp, a: Expression<f64>, b: Expression<f64>) -> Expression<f64> {
    Expression::binary(op, a, b)
}

#[test]
fn evaluate_identity_and_hand_example() {
    assert_eq!(x(0).evaluate(&[3.0]), 3.0);
    let e = bin(
        BinaryOp::Add,
        bin(BinaryOp::Mul, c(0.1), x(0)),
        Expression::unary(UnaryOp::Neg, x(1)),
    );
    assert_eq!(e.evaluate(&[1.0, 0.0]), 0.1);
}

#[test]
fn division_by_zero_is_a_value() {
    let e = bin(BinaryOp::Div, c(1.0), x(0));
    assert!(!e.evaluate(&[0.0]).is_finite());
    let l = Expression::unary(UnaryOp::Log, x(0));
    assert!(l.evaluate(&[-1.0]).is_nan());
}

#[test]
fn eval_system_rotation_pair() {
    let truth = OdeSystem::new(vec![Expression::unary(UnaryOp::Neg, x(1)), x(0)]).unwrap();
    assert_eq!(truth.eval(&[1.0, 0.0]), vec![0.0, 1.0]);
    let pred = OdeSystem::new(vec![
        bin(BinaryOp::Add, Expression::unary(UnaryOp::Neg, x(1)), bin(BinaryOp::Mul, c(0.1), x(0))),
        bin(BinaryOp::Add, x(0), bin(BinaryOp::Mul, c(0.1), x(1))),
    ])
    .unwrap();
    assert_eq!(pred.eval(&[1.0, 0.0]), vec![0.1, 1.0]);
    let consts = OdeSystem::new(vec![c(2.5), c(-1.0)]).unwrap();
    assert_eq!(consts.eval(&[7.0, 9.0]), vec![2.5, -1.0]);
}

#[test]
fn prefix_matches_token_order() {
    let e = bin(BinaryOp::Add, x(0), bin(BinaryOp::Mul, c(0.1), x(1)));
    assert_eq!(
        e.to_prefix(),
        vec![
            Symbol::Binary(BinaryOp::Add),
            Symbol::Var(0),
            Symbol::Binary(BinaryOp::Mul),
            Symbol::Const(0.1),
            Symbol::Var(1),
        ]
    );
    assert_eq!(x(0).to_prefix(), vec![Symbol::Var(0)]);
}

#[test]
fn from_prefix_reports_positions() {
    let err = Expression::<f64>::from_prefix(&[Symbol::Binary(BinaryOp::Add), Symbol::Var(0)])
        .unwrap_err();
    assert_eq!(err.to_string(), "incomplete expression at position 2");
    let err = Expression::<f64>::from_prefix(&[Symbol::Var(0), Symbol::Var(1)]).unwrap_err();
    assert_eq!(err, ExprError::Trailing(1));
    assert_eq!(Expression::<f64>::from_prefix(&[]).unwrap_err(), ExprError::Empty);
}

#[test]
fn system_rejects_out_of_range_variables() {
    let err = OdeSystem::new(vec![x(5), x(0)]).unwrap_err();
    assert_eq!(err, ExprError::VariableOutOfRange { index: 5, dim: 2 });
    assert!(Expression::constant(f64::NAN).is_err());
}

#[test]
fn display_round_trips_through_infix_parser() {
    let e = bin(
        BinaryOp::Sub,
        bin(BinaryOp::Mul, c(2.1), x(0)),
        bin(BinaryOp::Mul, c(0.5), Expression::unary(UnaryOp::Pow2, x(0))),
    );
    assert_eq!(e.to_string(), "2.1 * x_0 - 0.5 * x_0^2");
    assert_eq!(parse_infix::<f64>(&e.to_string()).unwrap(), e);
    let nested = bin(BinaryOp::Sub, x(0), bin(BinaryOp::Sub, x(1), c(-3.0)));
    assert_eq!(parse_infix::<f64>(&nested.to_string()).unwrap(), nested);
}
