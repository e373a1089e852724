//! Inference on user data from CSV.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use ddot_core::metrics::r_squared;
use ddot_core::{solve_ivp, uniform_grid, BinaryOp, Expression, OdeSystem, Trajectory};

use crate::evaluate::eval_ivp_config;
use crate::predict::{ModelPredictor, Prediction};

#[derive(Debug, Error)]
pub enum InferError {
    #[error("csv: {0}")]
    Csv(String),
    #[error("no data rows")]
    Empty,
    #[error("column {0:?} not found")]
    MissingColumn(String),
    #[error("row {row}, column {column:?}: {value:?} is not a number")]
    NotNumeric { row: usize, column: String, value: String },
    #[error("time must strictly increase (row {0})")]
    NonMonotoneTime(usize),
    #[error("{found} value columns; the model supports at most {max}")]
    Dimension { found: usize, max: usize },
    #[error("need a time column and at least one value column")]
    NoValues,
    #[error("prediction failed: {0}")]
    Prediction(String),
}

/// Raw numeric table: a time column and value columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvData {
    pub time_name: String,
    pub value_names: Vec<String>,
    pub times: Vec<f64>,
    /// One row per time, one entry per value column.
    pub rows: Vec<Vec<f64>>,
}

/// Reads a headed CSV. `columns` names the time column followed by the value
/// columns; without it the first column is time and the rest are values.
pub fn read_csv(path: &Path, columns: Option<&[String]>) -> Result<CsvData, InferError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| InferError::Csv(e.to_string()))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| InferError::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let wanted: Vec<String> = match columns {
        Some(c) => c.to_vec(),
        None => headers.clone(),
    };
    if wanted.len() < 2 {
        return Err(InferError::NoValues);
    }
    let idx: Vec<usize> = wanted
        .iter()
        .map(|c| headers.iter().position(|h| h == c).ok_or_else(|| InferError::MissingColumn(c.clone())))
        .collect::<Result<_, _>>()?;
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| InferError::Csv(e.to_string()))?;
        let mut vals = Vec::with_capacity(idx.len());
        for (&i, name) in idx.iter().zip(&wanted) {
            let raw = rec.get(i).unwrap_or("");
            let v: f64 = raw.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| InferError::NotNumeric {
                row: r + 1,
                column: name.clone(),
                value: raw.to_string(),
            })?;
            vals.push(v);
        }
        times.push(vals[0]);
        rows.push(vals[1..].to_vec());
    }
    if times.is_empty() {
        return Err(InferError::Empty);
    }
    if let Some(p) = times.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(InferError::NonMonotoneTime(p + 2));
    }
    Ok(CsvData {
        time_name: wanted[0].clone(),
        value_names: wanted[1..].to_vec(),
        times,
        rows,
    })
}

/// Linear interpolation of the rows onto `grid` (inside the data range).
pub fn resample(times: &[f64], rows: &[Vec<f64>], grid: &[f64]) -> Vec<Vec<f64>> {
    let mut j = 0;
    grid.iter()
        .map(|&t| {
            while j + 2 < times.len() && times[j + 1] < t {
                j += 1;
            }
            if times.len() == 1 {
                return rows[0].clone();
            }
            let (t0, t1) = (times[j], times[j + 1]);
            let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
            rows[j].iter().zip(&rows[j + 1]).map(|(a, b)| a + w * (b - a)).collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferOptions {
    /// Points on the resampled grid shown to the model.
    pub steps: usize,
    /// The model sees time rescaled to `[0, t_end]`.
    pub t_end: f64,
}

impl Default for InferOptions {
    fn default() -> Self {
        Self { steps: 100, t_end: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferResult {
    pub version: u32,
    pub columns: Vec<String>,
    /// In the original units, as prefix text.
    pub system: String,
    /// Readable infix rendering of `system`.
    pub system_infix: String,
    /// As predicted on normalized data.
    pub normalized_system: String,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Original time units per model time unit.
    pub time_scale: f64,
    /// R² of the recovered system against the resampled input.
    pub r2: f64,
}

/// Maps `dy/dtau = g(y)` with `x = mean + std * y`, `t = t0 + scale * tau` to
/// `dx/dt = (std / scale) * g((x - mean) / std)`.
pub fn denormalize(sys: &OdeSystem<f64>, means: &[f64], stds: &[f64], time_scale: f64) -> OdeSystem<f64> {
    let c = |v: f64| Expression::constant(v).expect("finite constant");
    let subs: Vec<Expression<f64>> = means
        .iter()
        .zip(stds)
        .enumerate()
        .map(|(k, (&m, &s))| {
            Expression::binary(
                BinaryOp::Mul,
                c(1.0 / s),
                Expression::binary(BinaryOp::Sub, Expression::var(k), c(m)),
            )
        })
        .collect();
    let eqs = sys
        .equations()
        .iter()
        .zip(stds)
        .map(|(e, &s)| Expression::binary(BinaryOp::Mul, c(s / time_scale), e.substitute(&subs)))
        .collect();
    OdeSystem::new(eqs).expect("same dimension")
}

fn mean_std(col: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = col.clone().count() as f64;
    let mean = col.clone().sum::<f64>() / n;
    let var = col.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 1e-12 { std } else { 1.0 })
}

pub fn infer_from_data(predictor: &ModelPredictor, data: &CsvData, opts: &InferOptions) -> Result<InferResult, InferError> {
    let d = data.value_names.len();
    let max = predictor.vocab.config().max_dim;
    if d == 0 {
        return Err(InferError::NoValues);
    }
    if d > max {
        return Err(InferError::Dimension { found: d, max });
    }
    if data.times.len() < 2 {
        return Err(InferError::Empty);
    }
    let (t0, t1) = (data.times[0], *data.times.last().unwrap());
    let grid = uniform_grid(t0, t1, opts.steps);
    let rows = resample(&data.times, &data.rows, &grid);
    let stats: Vec<(f64, f64)> = (0..d).map(|k| mean_std(rows.iter().map(move |r| r[k]))).collect();
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let stds: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let time_scale = (t1 - t0) / opts.t_end;
    let norm_rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().enumerate().map(|(k, v)| (v - means[k]) / stds[k]).collect())
        .collect();
    let tau = uniform_grid(0.0, opts.t_end, opts.steps);
    let observed = Trajectory::from_rows(tau, &norm_rows).map_err(|e| InferError::Prediction(e.to_string()))?;
    let normalized = match predictor.predict_observed(&observed) {
        Prediction::System(s) => s,
        Prediction::Missing => return Err(InferError::Prediction("no prediction".into())),
        Prediction::Invalid(e) => return Err(InferError::Prediction(e)),
    };
    let system = denormalize(&normalized, &means, &stds, time_scale);
    let truth = Trajectory::from_rows(grid.clone(), &rows).map_err(|e| InferError::Prediction(e.to_string()))?;
    let r2 = match solve_ivp(&system, &rows[0], &grid, &eval_ivp_config()) {
        Ok(t) => r_squared(&truth, &t).unwrap_or(f64::NEG_INFINITY),
        Err(_) => f64::NEG_INFINITY,
    };
    Ok(InferResult {
        version: 1,
        columns: std::iter::once(data.time_name.clone()).chain(data.value_names.clone()).collect(),
        system: system.prefix_string(),
        system_infix: system.to_string(),
        normalized_system: normalized.prefix_string(),
        means,
        stds,
        time_scale,
        r2,
    })
}

pub fn infer_from_csv(
    predictor: &ModelPredictor,
    path: &Path,
    columns: Option<&[String]>,
    opts: &InferOptions,
) -> Result<InferResult, InferError> {
    let data = read_csv(path, columns)?;
    infer_from_data(predictor, &data, opts)
}
