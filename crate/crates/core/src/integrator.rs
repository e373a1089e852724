//! Adaptive Dormand–Prince 5(4) initial-value solver with dense output onto a
//! fixed time grid.

use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::OdeSystem;
use crate::scalar::Scalar;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvpConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Attempted steps (accepted plus rejected) before giving up.
    pub max_steps: usize,
    /// Wall-clock limit; `None` disables the check.
    pub budget: Option<Duration>,
}

impl Default for IvpConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-3,
            atol: 1e-6,
            max_steps: 100_000,
            budget: Some(Duration::from_secs(1)),
        }
    }
}

impl IvpConfig {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureReason {
    StepUnderflow,
    NonFinite,
    BudgetExceeded,
    MaxSteps,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureReason::StepUnderflow => "step-underflow",
            FailureReason::NonFinite => "non-finite",
            FailureReason::BudgetExceeded => "budget-exceeded",
            FailureReason::MaxSteps => "max-steps",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IvpError {
    #[error("integration failed ({reason}) at t = {t} after {steps} steps")]
    Failed {
        reason: FailureReason,
        t: f64,
        steps: usize,
    },
    #[error("invalid problem: {0}")]
    Invalid(String),
}

impl IvpError {
    pub fn reason(&self) -> Option<FailureReason> {
        match self {
            IvpError::Failed { reason, .. } => Some(*reason),
            IvpError::Invalid(_) => None,
        }
    }
}

// Node offsets c_i are not needed: the right-hand side is autonomous.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// fifth minus fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// continuous extension (fourth order)
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
/// Proportional term of the PI controller (Hairer's DOPRI5 default).
const BETA: f64 = 0.04;

/// Integrates `sys` from `x0` at `grid[0]` and samples the solution at every
/// grid point.
pub fn solve_ivp<T: Scalar>(
    sys: &OdeSystem<T>,
    x0: &[T],
    grid: &[T],
    cfg: &IvpConfig,
) -> Result<Trajectory<T>, IvpError> {
    if x0.len() != sys.dim() {
        return Err(IvpError::Invalid(format!(
            "initial condition has {} components, system has {}",
            x0.len(),
            sys.dim()
        )));
    }
    solve_with(|x, dx| sys.eval_into(x, dx), x0, grid, cfg)
}

/// Dormand–Prince 5(4) for an arbitrary autonomous right-hand side.
pub fn solve_with<T: Scalar>(
    rhs: impl Fn(&[T], &mut [T]),
    x0: &[T],
    grid: &[T],
    cfg: &IvpConfig,
) -> Result<Trajectory<T>, IvpError> {
    let dim = x0.len();
    if dim == 0 || grid.is_empty() {
        return Err(IvpError::Invalid("empty state or grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|t| !t.is_finite()) {
        return Err(IvpError::Invalid("grid must be finite and strictly increasing".into()));
    }
    if !(cfg.rtol > 0.0 && cfg.atol > 0.0) {
        return Err(IvpError::Invalid("tolerances must be positive".into()));
    }
    let started = Instant::now();
    let rtol = T::of(cfg.rtol);
    let atol = T::of(cfg.atol);
    let fail = |reason, t: T, steps| IvpError::Failed {
        reason,
        t: t.f64(),
        steps,
    };
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(fail(FailureReason::NonFinite, grid[0], 0));
    }

    let mut out = Vec::with_capacity(grid.len() * dim);
    out.extend_from_slice(x0);
    let t_end = *grid.last().unwrap();
    let mut next_out = 1;

    let mut t = grid[0];
    let mut y = x0.to_vec();
    let mut k = vec![vec![T::zero(); dim]; 7];
    let mut tmp = vec![T::zero(); dim];
    let mut y_new = vec![T::zero(); dim];
    rhs(&y, &mut k[0]);
    if k[0].iter().any(|v| !v.is_finite()) {
        return Err(fail(FailureReason::NonFinite, t, 0));
    }

    let scaled_norm = |v: &[T], y: &[T]| -> T {
        let s: T = v
            .iter()
            .zip(y)
            .map(|(vi, yi)| {
                let r = *vi / (atol + rtol * yi.abs());
                r * r
            })
            .sum();
        (s / T::of(dim as f64)).sqrt()
    };

    // initial step, Hairer & Wanner II.4
    let mut h = {
        let d0 = scaled_norm(&y, &y);
        let d1 = scaled_norm(&k[0], &y);
        let h0 = if d0 < T::of(1e-5) || d1 < T::of(1e-5) {
            T::of(1e-6)
        } else {
            T::of(0.01) * d0 / d1
        };
        for i in 0..dim {
            tmp[i] = y[i] + h0 * k[0][i];
        }
        rhs(&tmp, &mut k[1]);
        for i in 0..dim {
            y_new[i] = (k[1][i] - k[0][i]) / h0;
        }
        let d2 = scaled_norm(&y_new, &y);
        let dmax = d1.max(d2);
        let h1 = if !(dmax > T::of(1e-15)) {
            (h0 * T::of(1e-3)).max(T::of(1e-6))
        } else {
            (T::of(0.01) / dmax).powf(T::of(0.2))
        };
        let h = (T::of(100.0) * h0).min(h1);
        if h.is_finite() {
            h
        } else {
            h0
        }
    };

    let mut steps = 0usize;
    let mut last_nonfinite = false;
    let mut last_rejected = false;
    let mut err_old = T::of(1e-4);
    while next_out < grid.len() {
        if steps >= cfg.max_steps {
            return Err(fail(FailureReason::MaxSteps, t, steps));
        }
        if let Some(budget) = cfg.budget {
            if started.elapsed() > budget {
                return Err(fail(FailureReason::BudgetExceeded, t, steps));
            }
        }
        let min_step = T::of(16.0) * T::epsilon() * t.abs().max(T::one());
        if h < min_step {
            let reason = if last_nonfinite {
                FailureReason::NonFinite
            } else {
                FailureReason::StepUnderflow
            };
            return Err(fail(reason, t, steps));
        }
        if t + h > t_end {
            h = t_end - t;
        }
        steps += 1;

        let stage = |coeffs: &[(usize, f64)], tmp: &mut [T], k: &[Vec<T>]| {
            for i in 0..dim {
                let mut acc = T::zero();
                for &(j, a) in coeffs {
                    acc += T::of(a) * k[j][i];
                }
                tmp[i] = y[i] + h * acc;
            }
        };
        stage(&[(0, A21)], &mut tmp, &k);
        rhs(&tmp, &mut k[1]);
        stage(&[(0, A31), (1, A32)], &mut tmp, &k);
        rhs(&tmp, &mut k[2]);
        stage(&[(0, A41), (1, A42), (2, A43)], &mut tmp, &k);
        rhs(&tmp, &mut k[3]);
        stage(&[(0, A51), (1, A52), (2, A53), (3, A54)], &mut tmp, &k);
        rhs(&tmp, &mut k[4]);
        stage(&[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], &mut tmp, &k);
        rhs(&tmp, &mut k[5]);
        stage(&[(0, A71), (2, A73), (3, A74), (4, A75), (5, A76)], &mut y_new, &k);
        rhs(&y_new, &mut k[6]);

        let mut err_sq = T::zero();
        let mut finite = true;
        for i in 0..dim {
            let e = h
                * (T::of(E1) * k[0][i]
                    + T::of(E3) * k[2][i]
                    + T::of(E4) * k[3][i]
                    + T::of(E5) * k[4][i]
                    + T::of(E6) * k[5][i]
                    + T::of(E7) * k[6][i]);
            let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
            let r = e / sc;
            err_sq += r * r;
            finite &= y_new[i].is_finite() && k[6][i].is_finite();
        }
        let err = (err_sq / T::of(dim as f64)).sqrt();
        if !finite || !err.is_finite() {
            last_nonfinite = true;
            h *= T::of(MIN_FACTOR);
            continue;
        }
        last_nonfinite = false;

        // h_new = h * safety * err^-(1/5 - 3/4 beta) * err_old^beta
        let p = err.max(T::of(1e-300)).powf(T::of(-0.2 + 0.75 * BETA));
        if err > T::one() {
            h *= (T::of(SAFETY) * p).max(T::of(MIN_FACTOR)).min(T::one());
            last_rejected = true;
            continue;
        }
        let mut factor = (T::of(SAFETY) * p * err_old.powf(T::of(BETA)))
            .max(T::of(MIN_FACTOR))
            .min(T::of(MAX_FACTOR));
        if last_rejected {
            factor = factor.min(T::one());
        }
        last_rejected = false;
        err_old = err.max(T::of(1e-4));

        let t_new = if h == t_end - t { t_end } else { t + h };
        // dense output for every grid point inside (t, t_new]
        while next_out < grid.len() && grid[next_out] <= t_new {
            let tg = grid[next_out];
            if tg == t_new {
                out.extend_from_slice(&y_new);
            } else {
                let theta = (tg - t) / h;
                let theta1 = T::one() - theta;
                for i in 0..dim {
                    let r1 = y[i];
                    let r2 = y_new[i] - y[i];
                    let r3 = h * k[0][i] - r2;
                    let r4 = r2 - h * k[6][i] - r3;
                    let r5 = h
                        * (T::of(D1) * k[0][i]
                            + T::of(D3) * k[2][i]
                            + T::of(D4) * k[3][i]
                            + T::of(D5) * k[4][i]
                            + T::of(D6) * k[5][i]
                            + T::of(D7) * k[6][i]);
                    out.push(r1 + theta * (r2 + theta1 * (r3 + theta * (r4 + theta1 * r5))));
                }
            }
            next_out += 1;
        }
        t = t_new;
        y.copy_from_slice(&y_new);
        k.swap(0, 6);
        h *= factor;
    }

    Trajectory::new(grid.to_vec(), out, dim).map_err(|_| fail(FailureReason::NonFinite, t, steps))
}
