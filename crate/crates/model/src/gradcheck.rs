//! Central finite-difference check of the hand-written backward pass.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::data::Example;
use crate::network::{Model, ModelError};
use crate::params::Params;

#[derive(Debug, Clone, PartialEq)]
pub struct GradEntry {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<GradEntry>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_error).fold(0.0, f64::max)
    }

    /// Largest error among entries whose tensor name starts with `prefix`.
    pub fn max_rel_error_in(&self, prefix: &str) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.tensor.starts_with(prefix))
            .map(|e| e.rel_error)
            .fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GradEntry> {
        self.entries.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// Floor of the relative-error denominator, so exactly-zero gradients compare
/// on an absolute scale. Central differences at eps 1e-5 carry roundoff of
/// roughly 1e-10 on O(1) losses, far below this floor.
pub const REL_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(REL_FLOOR)
}

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Total parameters sampled, spread evenly over all tensors (at least one
    /// each).
    pub samples: usize,
    pub seed: u64,
    pub lambda_rec: f64,
    pub lambda_der: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            samples: 400,
            seed: 0,
            lambda_rec: 1.0,
            lambda_der: 1.0,
        }
    }
}

/// Compares the analytic gradient of the batch loss against central
/// differences. `corrupt` may alter the analytic gradient first, which lets
/// callers confirm the check notices a broken backward pass.
pub fn grad_check(
    model: &Model<f64>,
    batch: &[Example],
    cfg: &GradCheckConfig,
    corrupt: Option<&dyn Fn(&mut Params<f64>)>,
) -> Result<GradCheckReport, ModelError> {
    let (_, mut grads) = model.batch_gradients(batch, cfg.lambda_rec, cfg.lambda_der)?;
    if let Some(f) = corrupt {
        f(&mut grads);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_tensors = model.params.len();
    let per = cfg.samples.div_ceil(n_tensors).max(1);
    let mut probe = model.clone();
    let mut entries = Vec::new();
    for id in 0..n_tensors {
        let len = model.params.t(id).len();
        let picks = rand::seq::index::sample(&mut rng, len, per.min(len)).into_vec();
        for i in picks {
            let orig = model.params.t(id)[i];
            probe.params.t_mut(id)[i] = orig + cfg.eps;
            let up = probe.batch_loss(batch, cfg.lambda_rec, cfg.lambda_der)?.total;
            probe.params.t_mut(id)[i] = orig - cfg.eps;
            let down = probe.batch_loss(batch, cfg.lambda_rec, cfg.lambda_der)?.total;
            probe.params.t_mut(id)[i] = orig;
            let numeric = (up - down) / (2.0 * cfg.eps);
            let analytic = grads.t(id)[i];
            entries.push(GradEntry {
                tensor: model.params.specs()[id].name.clone(),
                index: i,
                analytic,
                numeric,
                rel_error: relative_error(analytic, numeric),
            });
        }
    }
    Ok(GradCheckReport { entries })
}
