//! Reconstruction, generalization and divergence scoring of one prediction.

use thiserror::Error;

use ddot_core::metrics::{div_diff, r_squared, region_from_trajectory};
use ddot_core::numtok::parse_prefix_text;
use ddot_core::{parse_infix_system, solve_ivp, IvpConfig, MetricError, OdeSystem, Region, Trajectory};

use crate::benchmark::{BenchmarkEntry, BenchmarkError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error("entry {id}: ground truth failed to integrate: {msg}")]
    Truth { id: String, msg: String },
    #[error("prediction has dimension {found}, entry {id} has {expected}")]
    Dimension { id: String, expected: usize, found: usize },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Integrator settings for scoring: tighter than generation defaults and
/// without a wall-clock budget, so scores are reproducible.
pub fn eval_ivp_config() -> IvpConfig {
    IvpConfig {
        rtol: 1e-6,
        atol: 1e-9,
        max_steps: 50_000,
        budget: None,
    }
}

/// Padding of the divergence region around the truth trajectory.
pub const REGION_PADDING: f64 = 0.1;

/// Parses prefix text, falling back to infix.
pub fn parse_system_text(text: &str) -> Result<OdeSystem<f64>, String> {
    match parse_prefix_text(text) {
        Ok(s) => Ok(s),
        Err(pe) => parse_infix_system(text).map_err(|ie| format!("not prefix ({pe}) nor infix ({ie})")),
    }
}

/// Ground truth of one entry with its trajectories and divergence region.
#[derive(Debug, Clone)]
pub struct TruthContext {
    pub system: OdeSystem<f64>,
    pub grid: Vec<f64>,
    pub reconstruction: Trajectory<f64>,
    pub generalization: Option<Trajectory<f64>>,
    pub region: Result<Region<f64>, MetricError>,
}

impl TruthContext {
    pub fn new(entry: &BenchmarkEntry) -> Result<Self, EvalError> {
        let system = entry.system()?;
        let grid = entry.grid();
        let cfg = eval_ivp_config();
        let truth_err = |e: ddot_core::IvpError| EvalError::Truth {
            id: entry.id.clone(),
            msg: e.to_string(),
        };
        let reconstruction = solve_ivp(&system, entry.reconstruction_ic(), &grid, &cfg).map_err(truth_err)?;
        let generalization = entry
            .generalization_ic()
            .map(|ic| solve_ivp(&system, ic, &grid, &cfg))
            .transpose()
            .map_err(truth_err)?;
        let region = region_from_trajectory(&reconstruction, REGION_PADDING);
        Ok(Self {
            system,
            grid,
            reconstruction,
            generalization,
            region,
        })
    }
}

fn check_dim(pred: &OdeSystem<f64>, entry: &BenchmarkEntry) -> Result<(), EvalError> {
    if pred.dim() != entry.dim {
        return Err(EvalError::Dimension {
            id: entry.id.clone(),
            expected: entry.dim,
            found: pred.dim(),
        });
    }
    Ok(())
}

/// R² of `pred` integrated from `ic` against `truth`; `-inf` when the
/// prediction cannot be integrated over the whole grid.
fn trajectory_score(pred: &OdeSystem<f64>, ic: &[f64], truth: &Trajectory<f64>) -> Result<f64, EvalError> {
    match solve_ivp(pred, ic, truth.times(), &eval_ivp_config()) {
        Ok(traj) => Ok(r_squared(truth, &traj)?),
        Err(_) => Ok(f64::NEG_INFINITY),
    }
}

/// Both systems integrated from the first initial condition; R² against the
/// clean truth.
pub fn evaluate_reconstruction(pred: &OdeSystem<f64>, entry: &BenchmarkEntry, ctx: &TruthContext) -> Result<f64, EvalError> {
    check_dim(pred, entry)?;
    trajectory_score(pred, entry.reconstruction_ic(), &ctx.reconstruction)
}

/// As reconstruction, from the second initial condition; `None` when the
/// entry has only one.
pub fn evaluate_generalization(
    pred: &OdeSystem<f64>,
    entry: &BenchmarkEntry,
    ctx: &TruthContext,
) -> Result<Option<f64>, EvalError> {
    check_dim(pred, entry)?;
    match (entry.generalization_ic(), &ctx.generalization) {
        (Some(ic), Some(truth)) => trajectory_score(pred, ic, truth).map(Some),
        _ => Ok(None),
    }
}

/// DIV-diff over the padded bounding box of the truth reconstruction.
pub fn evaluate_divergence(pred: &OdeSystem<f64>, entry: &BenchmarkEntry, ctx: &TruthContext) -> Result<f64, EvalError> {
    check_dim(pred, entry)?;
    let region = ctx.region.clone()?;
    Ok(div_diff(&ctx.system, pred, &region)?)
}
