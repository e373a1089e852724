//! Trajectory and vector-field scores.
//!
//! * [`r_squared`] compares a predicted roll-out against the truth over all
//!   components jointly; [`p_r2_above`] aggregates scores into the fraction
//!   above a threshold.
//! * [`divergence_field`] samples `div f = sum_k df_k/dx_k` (symbolic partials)
//!   on a tensor grid, and [`div_diff`] reduces the pointwise difference of two
//!   fields to `sqrt(mean(ln(1 + |div_a - div_b|)^2))` over the points where both
//!   are finite.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expression, OdeSystem};
use crate::scalar::Scalar;
use crate::trajectory::Trajectory;

pub const DEFAULT_GRID_CAP: usize = 1_000_000;
/// Minimum fraction of jointly finite grid points for [`div_diff`].
pub const MIN_VALID_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("time grids or dimensions differ: {0}")]
    GridMismatch(String),
    #[error("score list is empty")]
    EmptyScores,
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("grid of {size} points exceeds the cap of {cap}")]
    GridTooLarge { size: usize, cap: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("only {valid} of {total} grid points are finite for both fields")]
    DegenerateRegion { valid: usize, total: usize },
}

/// `1 - SSE/SST` over all components, with SST taken about the truth's
/// per-component mean. Non-finite predictions give `-inf`. A constant truth
/// (SST = 0) scores 1 for an exact match and 0 otherwise.
pub fn r_squared<T: Scalar>(truth: &Trajectory<T>, pred: &Trajectory<T>) -> Result<T, MetricError> {
    if truth.dim() != pred.dim() || truth.times() != pred.times() {
        return Err(MetricError::GridMismatch(format!(
            "{} steps x {} dims vs {} steps x {} dims",
            truth.len(),
            truth.dim(),
            pred.len(),
            pred.dim()
        )));
    }
    r_squared_states(truth, pred.states())
}

/// Same as [`r_squared`] for a raw row-major prediction buffer.
pub fn r_squared_states<T: Scalar>(truth: &Trajectory<T>, pred: &[T]) -> Result<T, MetricError> {
    if pred.len() != truth.states().len() {
        return Err(MetricError::GridMismatch(format!(
            "{} predicted values for {} states",
            pred.len(),
            truth.states().len()
        )));
    }
    if pred.iter().any(|v| !v.is_finite()) {
        return Ok(T::neg_infinity());
    }
    let d = truth.dim();
    let n = T::of(truth.len() as f64);
    let means: Vec<T> = (0..d).map(|k| truth.column(k).sum::<T>() / n).collect();
    let mut sse = T::zero();
    let mut sst = T::zero();
    for (row, prow) in truth.rows().zip(pred.chunks_exact(d)) {
        for k in 0..d {
            let r = row[k] - prow[k];
            let c = row[k] - means[k];
            sse += r * r;
            sst += c * c;
        }
    }
    if !sse.is_finite() {
        return Ok(T::neg_infinity());
    }
    if sst == T::zero() {
        return Ok(if sse == T::zero() { T::one() } else { T::zero() });
    }
    Ok(T::one() - sse / sst)
}

/// Fraction of scores strictly above `threshold`; `-inf` failures count in
/// the denominator.
pub fn p_r2_above(scores: &[f64], threshold: f64) -> Result<f64, MetricError> {
    if scores.is_empty() {
        return Err(MetricError::EmptyScores);
    }
    let hits = scores.iter().filter(|&&s| s > threshold).count();
    Ok(hits as f64 / scores.len() as f64)
}

/// Axis-aligned box `[lo_k, hi_k]` sampled with `G_k` points per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region<T> {
    bounds: Vec<(T, T)>,
    resolution: Vec<usize>,
}

impl<T: Scalar> Region<T> {
    pub fn new(bounds: Vec<(T, T)>, resolution: Vec<usize>) -> Result<Self, MetricError> {
        Self::with_cap(bounds, resolution, DEFAULT_GRID_CAP)
    }

    pub fn with_cap(bounds: Vec<(T, T)>, resolution: Vec<usize>, cap: usize) -> Result<Self, MetricError> {
        if bounds.is_empty() || bounds.len() != resolution.len() {
            return Err(MetricError::InvalidRegion(format!(
                "{} bounds for {} resolutions",
                bounds.len(),
                resolution.len()
            )));
        }
        for (k, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(MetricError::InvalidRegion(format!("axis {k}: [{lo}, {hi}]")));
            }
            if resolution[k] < 2 {
                return Err(MetricError::InvalidRegion(format!("axis {k}: resolution {}", resolution[k])));
            }
        }
        let size = resolution
            .iter()
            .try_fold(1usize, |acc, &g| acc.checked_mul(g))
            .unwrap_or(usize::MAX);
        if size > cap {
            return Err(MetricError::GridTooLarge { size, cap });
        }
        Ok(Self { bounds, resolution })
    }

    /// Same bounds on every axis.
    pub fn uniform(dim: usize, lo: T, hi: T, resolution: usize) -> Result<Self, MetricError> {
        Self::new(vec![(lo, hi); dim], vec![resolution; dim])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(T, T)] {
        &self.bounds
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn size(&self) -> usize {
        self.resolution.iter().product()
    }

    /// Grid points, row-major with the last axis varying fastest.
    pub fn points(&self) -> Vec<T> {
        let d = self.dim();
        let n = self.size();
        let axes: Vec<Vec<T>> = self
            .bounds
            .iter()
            .zip(&self.resolution)
            .map(|(&(lo, hi), &g)| {
                (0..g)
                    .map(|i| {
                        if i + 1 == g {
                            hi
                        } else {
                            lo + (hi - lo) * T::of(i as f64 / (g - 1) as f64)
                        }
                    })
                    .collect()
            })
            .collect();
        let mut out = Vec::with_capacity(n * d);
        let mut idx = vec![0usize; d];
        for _ in 0..n {
            out.extend(idx.iter().zip(&axes).map(|(&i, a)| a[i]));
            for k in (0..d).rev() {
                idx[k] += 1;
                if idx[k] < self.resolution[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        out
    }
}

/// Default points per axis for a region of dimension `d`.
pub fn default_resolution(d: usize) -> usize {
    match d {
        0..=2 => 20,
        3 => 10,
        _ => 6,
    }
}

/// Bounding box of the trajectory's states, each side widened by
/// `padding * width`; boxes narrower than `1e-3` are widened around their
/// centre.
pub fn region_from_trajectory<T: Scalar>(traj: &Trajectory<T>, padding: T) -> Result<Region<T>, MetricError> {
    let min_width = T::of(1e-3);
    let half = T::of(0.5);
    let bounds = (0..traj.dim())
        .map(|k| {
            let (lo, hi) = traj
                .column(k)
                .fold((T::infinity(), T::neg_infinity()), |(lo, hi), v| (lo.min(v), hi.max(v)));
            let w = hi - lo;
            let (lo, hi) = (lo - padding * w, hi + padding * w);
            if hi - lo < min_width {
                let c = (lo + hi) * half;
                (c - min_width * half, c + min_width * half)
            } else {
                (lo, hi)
            }
        })
        .collect();
    let g = default_resolution(traj.dim());
    Region::new(bounds, vec![g; traj.dim()])
}

/// Symbolic divergence terms `df_k/dx_k`.
pub fn divergence_terms<T: Scalar>(sys: &OdeSystem<T>) -> Vec<Expression<T>> {
    sys.equations()
        .iter()
        .enumerate()
        .map(|(k, f)| f.partial_derivative(k))
        .collect()
}

fn eval_terms<T: Scalar>(terms: &[Expression<T>], point: &[T]) -> T {
    terms.iter().map(|t| t.evaluate(point)).sum()
}

/// `sum_k df_k/dx_k` at `point`; non-finite values propagate.
pub fn divergence_at<T: Scalar>(sys: &OdeSystem<T>, point: &[T]) -> T {
    eval_terms(&divergence_terms(sys), point)
}

/// Divergence sampled on a grid; `None` marks non-finite points.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceField<T> {
    pub region: Region<T>,
    pub points: Vec<T>,
    pub values: Vec<Option<T>>,
}

impl<T: Scalar> DivergenceField<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, i: usize) -> &[T] {
        let d = self.region.dim();
        &self.points[i * d..(i + 1) * d]
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// CSV with columns `x_0..x_{d-1},div,valid`; invalid rows leave `div`
    /// empty.
    pub fn to_csv(&self) -> String {
        let d = self.region.dim();
        let mut s = String::new();
        for k in 0..d {
            let _ = write!(s, "x_{k},");
        }
        s.push_str("div,valid\n");
        for (i, v) in self.values.iter().enumerate() {
            for x in self.point(i) {
                let _ = write!(s, "{x},");
            }
            match v {
                Some(v) => {
                    let _ = writeln!(s, "{v},1");
                }
                None => s.push_str(",0\n"),
            }
        }
        s
    }
}

pub fn divergence_field<T: Scalar>(sys: &OdeSystem<T>, region: &Region<T>) -> Result<DivergenceField<T>, MetricError> {
    if sys.dim() != region.dim() {
        return Err(MetricError::Dimension(sys.dim(), region.dim()));
    }
    let terms = divergence_terms(sys);
    let points = region.points();
    let values = points
        .par_chunks(region.dim())
        .map(|p| {
            let v = eval_terms(&terms, p);
            v.is_finite().then_some(v)
        })
        .collect();
    Ok(DivergenceField {
        region: region.clone(),
        points,
        values,
    })
}

/// Root-log-mean-squared divergence difference between two systems over a
/// region. Requires at least half the grid to be finite for both fields.
pub fn div_diff<T: Scalar>(truth: &OdeSystem<T>, pred: &OdeSystem<T>, region: &Region<T>) -> Result<T, MetricError> {
    if truth.dim() != pred.dim() {
        return Err(MetricError::Dimension(truth.dim(), pred.dim()));
    }
    let a = divergence_field(truth, region)?;
    let b = divergence_field(pred, region)?;
    div_diff_fields(&a, &b)
}

pub fn div_diff_fields<T: Scalar>(a: &DivergenceField<T>, b: &DivergenceField<T>) -> Result<T, MetricError> {
    if a.region != b.region {
        return Err(MetricError::InvalidRegion("fields sampled on different regions".into()));
    }
    let total = a.len();
    let mut sum = T::zero();
    let mut valid = 0usize;
    for (x, y) in a.values.iter().zip(&b.values) {
        if let (Some(x), Some(y)) = (x, y) {
            let e = (*x - *y).abs().ln_1p();
            sum += e * e;
            valid += 1;
        }
    }
    if valid == 0 || (valid as f64) < MIN_VALID_FRACTION * total as f64 {
        return Err(MetricError::DegenerateRegion { valid, total });
    }
    Ok((sum / T::of(valid as f64)).sqrt())
}
