use ddot_core::expr::{BinaryOp, Expression, OdeSystem};
use ddot_core::integrator::{solve_ivp, IvpConfig};
use ddot_core::trajectory::uniform_grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type M2 = [[f64; 2]; 2];

fn mat_mul(a: &M2, b: &M2) -> M2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// `exp(A t)` by scaling and squaring around a 30-term Taylor series.
fn expm(a: &M2, t: f64) -> M2 {
    let norm = a.iter().flatten().map(|v| (v * t).abs()).sum::<f64>();
    let s = (norm.max(1.0).log2().ceil() as i32 + 1).max(0);
    let scale = t / 2f64.powi(s);
    let b = [[a[0][0] * scale, a[0][1] * scale], [a[1][0] * scale, a[1][1] * scale]];
    let mut term = [[1.0, 0.0], [0.0, 1.0]];
    let mut sum = term;
    for n in 1..30 {
        term = mat_mul(&term, &b);
        for row in term.iter_mut() {
            for v in row.iter_mut() {
                *v /= n as f64;
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                sum[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..s {
        sum = mat_mul(&sum, &sum);
    }
    sum
}

fn linear_system(a: &M2) -> OdeSystem<f64> {
    let row = |r: &[f64; 2]| {
        Expression::binary(
            BinaryOp::Add,
            Expression::binary(BinaryOp::Mul, Expression::Const(r[0]), Expression::Var(0)),
            Expression::binary(BinaryOp::Mul, Expression::Const(r[1]), Expression::Var(1)),
        )
    };
    OdeSystem::new(vec![row(&a[0]), row(&a[1])]).unwrap()
}

/// Random matrix shifted so its rightmost eigenvalue has real part in [-1, -0.05].
fn stable_matrix(rng: &mut ChaCha8Rng) -> M2 {
    let mut a: M2 = [[0.0; 2]; 2];
    for v in a.iter_mut().flatten() {
        *v = rng.random_range(-2.0..2.0);
    }
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = tr * tr / 4.0 - det;
    let max_re = tr / 2.0 + if disc > 0.0 { disc.sqrt() } else { 0.0 };
    let shift = max_re + rng.random_range(0.05..1.0);
    a[0][0] -= shift;
    a[1][1] -= shift;
    a
}

#[test]
fn matches_matrix_exponential_on_stable_linear_systems() {
    let cfg = IvpConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let grid = uniform_grid(0.0, 10.0, 101);
    for case in 0..20 {
        let a = stable_matrix(&mut rng);
        let x0 = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let traj = solve_ivp(&linear_system(&a), &x0, &grid, &cfg).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let e = expm(&a, t);
            let exact = [e[0][0] * x0[0] + e[0][1] * x0[1], e[1][0] * x0[0] + e[1][1] * x0[1]];
            let got = traj.state(i);
            let scale = exact.iter().map(|v| v.abs()).fold(0.0, f64::max).max(x0[0].abs().max(x0[1].abs()));
            for k in 0..2 {
                let err = (got[k] - exact[k]).abs();
                assert!(
                    err <= 10.0 * cfg.rtol * scale,
                    "case {case} t={t} k={k}: {} vs {} (A={a:?})",
                    got[k],
                    exact[k]
                );
            }
        }
    }
}

#[test]
fn oracle_exponential_is_self_consistent() {
    let a = [[0.0, -1.0], [1.0, 0.0]];
    let e = expm(&a, std::f64::consts::PI);
    assert!((e[0][0] + 1.0).abs() < 1e-12 && e[1][0].abs() < 1e-12);
}

#[test]
fn f32_solver_tracks_f64() {
    let a = [[-0.5, -1.0], [1.0, -0.2]];
    let sys = linear_system(&a);
    let grid = uniform_grid(0.0, 5.0, 21);
    let t64 = solve_ivp(&sys, &[1.0, 0.0], &grid, &IvpConfig::default()).unwrap();
    let grid32: Vec<f32> = grid.iter().map(|&t| t as f32).collect();
    let t32 = solve_ivp(&sys.cast::<f32>(), &[1.0f32, 0.0], &grid32, &IvpConfig::default()).unwrap();
    for (a, b) in t64.states().iter().zip(t32.states()) {
        assert!((a - *b as f64).abs() < 1e-3);
    }
}
