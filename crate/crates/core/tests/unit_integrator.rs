use std::time::{Duration, Instant};
use ddot_core::integrator::*;
use ddot_core::*;
use ddot_core::expr::{BinaryOp, Expression, UnaryOp};
use ddot_core::trajectory::uniform_grid;

fn oscillator() -> OdeSystem<f64> {
    OdeSystem::new(vec![Expression::Var(1), Expression::unary(UnaryOp::Neg, Expression::Var(0))]).unwrap()
}

fn endpoint_error(cfg: &IvpConfig) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    let traj = solve_ivp(&oscillator(), &[1.0, 0.0], &uniform_grid(0.0, tau, 50), cfg).unwrap();
    let last = traj.state(traj.len() - 1);
    ((last[0] - 1.0).powi(2) + last[1].powi(2)).sqrt()
}

#[test]
fn harmonic_oscillator_closes_the_orbit() {
    assert!(endpoint_error(&IvpConfig::default()) <= 1e-3);
    assert!(endpoint_error(&IvpConfig::with_tolerances(1e-6, 1e-9)) <= 1e-5);
}

#[test]
fn tighter_tolerances_do_not_increase_error() {
    let mut prev = f64::INFINITY;
    for &rtol in &[1e-3, 5e-4, 2.5e-4, 1.25e-4, 6.25e-5] {
        let e = endpoint_error(&IvpConfig::with_tolerances(rtol, rtol * 1e-3));
        assert!(e <= prev * 1.0001, "rtol {rtol}: {e} > {prev}");
        prev = e;
    }
}

#[test]
fn interpolated_points_follow_the_analytic_solution() {
    let grid = uniform_grid(0.0, 10.0, 137);
    let traj = solve_ivp(&oscillator(), &[1.0, 0.0], &grid, &IvpConfig::with_tolerances(1e-8, 1e-10)).unwrap();
    for (i, t) in grid.iter().enumerate() {
        assert!((traj.state(i)[0] - t.cos()).abs() < 1e-6);
        assert!((traj.state(i)[1] + t.sin()).abs() < 1e-6);
    }
}

#[test]
fn zero_field_keeps_the_state_exactly() {
    let sys = OdeSystem::new(vec![Expression::Const(0.0)]).unwrap();
    let traj = solve_ivp(&sys, &[5.0], &uniform_grid(0.0, 10.0, 30), &IvpConfig::default()).unwrap();
    assert!(traj.states().iter().all(|&v| v == 5.0));
}

#[test]
fn finite_time_blow_up_fails() {
    let sys = OdeSystem::new(vec![Expression::unary(UnaryOp::Pow2, Expression::Var(0))]).unwrap();
    let err = solve_ivp(&sys, &[1.0], &uniform_grid(0.0, 2.0, 20), &IvpConfig::default()).unwrap_err();
    let reason = err.reason().unwrap();
    assert!(
        matches!(reason, FailureReason::NonFinite | FailureReason::StepUnderflow | FailureReason::MaxSteps),
        "{reason}"
    );
    let IvpError::Failed { t, .. } = err else { unreachable!() };
    assert!(t <= 1.0 + 1e-9);
}

#[test]
fn stiff_decay_hits_the_step_cap() {
    let sys = OdeSystem::new(vec![Expression::binary(
        BinaryOp::Mul,
        Expression::Const(-1e5),
        Expression::Var(0),
    )])
    .unwrap();
    let err = solve_ivp(&sys, &[1.0], &uniform_grid(0.0, 10.0, 50), &IvpConfig::default()).unwrap_err();
    assert_eq!(err.reason(), Some(FailureReason::MaxSteps));
}

#[test]
fn wall_clock_budget_is_enforced() {
    let sys = OdeSystem::new(vec![Expression::binary(
        BinaryOp::Mul,
        Expression::Const(-1e5),
        Expression::Var(0),
    )])
    .unwrap();
    let cfg = IvpConfig {
        max_steps: usize::MAX,
        budget: Some(Duration::from_millis(20)),
        ..IvpConfig::default()
    };
    let start = Instant::now();
    let err = solve_ivp(&sys, &[1.0], &uniform_grid(0.0, 1e4, 50), &cfg).unwrap_err();
    assert_eq!(err.reason(), Some(FailureReason::BudgetExceeded));
    assert!(start.elapsed() < Duration::from_millis(200));
}

#[test]
fn rejects_bad_grids() {
    assert!(matches!(
        solve_ivp(&oscillator(), &[1.0, 0.0], &[0.0, 0.0], &IvpConfig::default()),
        Err(IvpError::Invalid(_))
    ));
    assert!(matches!(
        solve_ivp(&oscillator(), &[1.0], &[0.0, 1.0], &IvpConfig::default()),
        Err(IvpError::Invalid(_))
    ));
}
