use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("trajectory has no time steps")]
    Empty,
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("state buffer length {got} does not match {steps} steps x {dim} dims")]
    Shape { got: usize, steps: usize, dim: usize },
    #[error("times not strictly increasing at step {0}")]
    NonMonotone(usize),
    #[error("non-finite state at step {0}")]
    NonFinite(usize),
}

/// Time stamps `t_0 < ... < t_{N-1}` paired with finite states in `R^d`,
/// stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    times: Vec<T>,
    states: Vec<T>,
    dim: usize,
}

impl<T: Scalar> Trajectory<T> {
    pub fn new(times: Vec<T>, states: Vec<T>, dim: usize) -> Result<Self, TrajectoryError> {
        if dim == 0 {
            return Err(TrajectoryError::ZeroDimension);
        }
        if times.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        if states.len() != times.len() * dim {
            return Err(TrajectoryError::Shape {
                got: states.len(),
                steps: times.len(),
                dim,
            });
        }
        for i in 0..times.len() {
            if !times[i].is_finite() || (i > 0 && times[i] <= times[i - 1]) {
                return Err(TrajectoryError::NonMonotone(i));
            }
            if states[i * dim..(i + 1) * dim].iter().any(|v| !v.is_finite()) {
                return Err(TrajectoryError::NonFinite(i));
            }
        }
        Ok(Self { times, states, dim })
    }

    pub fn from_rows(times: Vec<T>, rows: &[Vec<T>]) -> Result<Self, TrajectoryError> {
        let dim = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != dim) {
            return Err(TrajectoryError::Shape {
                got: rows.iter().map(|r| r.len()).sum(),
                steps: rows.len(),
                dim,
            });
        }
        Self::new(times, rows.concat(), dim)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn states(&self) -> &[T] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &[T] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.states.chunks_exact(self.dim)
    }

    pub fn column(&self, k: usize) -> impl Iterator<Item = T> + '_ {
        self.rows().map(move |r| r[k])
    }

    /// Same time grid with different states; the caller guarantees finiteness.
    pub(crate) fn with_states(&self, states: Vec<T>) -> Self {
        debug_assert_eq!(states.len(), self.states.len());
        Self {
            times: self.times.clone(),
            states,
            dim: self.dim,
        }
    }
}

/// `n` evenly spaced points covering `[t0, t1]` inclusive.
pub fn uniform_grid<T: Scalar>(t0: T, t1: T, n: usize) -> Vec<T> {
    if n == 1 {
        return vec![t0];
    }
    let step = (t1 - t0) / T::of((n - 1) as f64);
    (0..n)
        .map(|i| if i + 1 == n { t1 } else { t0 + step * T::of(i as f64) })
        .collect()
}
