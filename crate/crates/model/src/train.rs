use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{lr_schedule, TrainConfig};
use crate::data::Example;
use crate::element::Element;
use crate::network::{BatchLoss, Model, ModelError};
use crate::params::Params;

/// Outcome of one optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Step index the update was computed at.
    pub step: u64,
    pub lr: f64,
    pub loss: BatchLoss,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    /// False when the loss or a gradient was non-finite; nothing was changed.
    pub applied: bool,
}

/// One line of a training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub rec_loss: Option<f64>,
    pub der_loss: Option<f64>,
    pub rec_acc: Option<f64>,
    pub der_acc: Option<f64>,
    pub grad_norm: f64,
    pub applied: bool,
}

impl From<&StepReport> for LossRecord {
    fn from(r: &StepReport) -> Self {
        Self {
            step: r.step,
            lr: r.lr,
            loss: r.loss.total,
            rec_loss: r.loss.rec.map(|s| s.mean_loss()),
            der_loss: r.loss.der.map(|s| s.mean_loss()),
            rec_acc: r.loss.rec.map(|s| s.accuracy()),
            der_acc: r.loss.der.map(|s| s.accuracy()),
            grad_norm: r.grad_norm,
            applied: r.applied,
        }
    }
}

/// Picks the examples of step `step`: a seeded draw without replacement, so
/// the batch order depends only on `(seed, step)`.
pub fn batch_indices(n: usize, batch: usize, seed: u64, step: u64) -> Vec<usize> {
    if batch >= n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    sample(&mut rng, n, batch).into_vec()
}

/// Model plus Adam state.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub model: Model<T>,
    pub cfg: TrainConfig,
    pub(crate) m: Params<T>,
    pub(crate) v: Params<T>,
    pub step: u64,
}

impl<T: Element> Trainer<T> {
    pub fn new(model: Model<T>, cfg: TrainConfig) -> Result<Self, ModelError> {
        cfg.validate().map_err(ModelError::Config)?;
        let m = model.params.zeros_like();
        let v = model.params.zeros_like();
        Ok(Self { model, cfg, m, v, step: 0 })
    }

    pub fn first_moments(&self) -> &Params<T> {
        &self.m
    }

    pub fn second_moments(&self) -> &Params<T> {
        &self.v
    }

    /// Forward, backward, clip and Adam update on `batch`.
    pub fn train_step(&mut self, batch: &[Example]) -> Result<StepReport, ModelError> {
        let lr = lr_schedule(self.step, &self.cfg);
        let (loss, mut grads) = self.model.batch_gradients(batch, self.cfg.lambda_rec, self.cfg.lambda_der)?;
        let grad_norm = grads.sq_norm().sqrt();
        let step = self.step;
        if !loss.total.is_finite() || !grad_norm.is_finite() {
            return Ok(StepReport {
                step,
                lr,
                loss,
                grad_norm,
                applied: false,
            });
        }
        if self.cfg.clip_norm > 0.0 && grad_norm > self.cfg.clip_norm {
            grads.scale(T::of(self.cfg.clip_norm / grad_norm));
        }
        let (b1, b2, eps) = (self.cfg.beta1, self.cfg.beta2, self.cfg.adam_eps);
        let t = (step + 1) as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for id in 0..grads.len() {
            let g = grads.t(id);
            let m = self.m.t_mut(id);
            for (m, g) in m.iter_mut().zip(g) {
                *m = T::of(b1 * m.f64() + (1.0 - b1) * g.f64());
            }
            let v = self.v.t_mut(id);
            for (v, g) in v.iter_mut().zip(g) {
                *v = T::of(b2 * v.f64() + (1.0 - b2) * g.f64() * g.f64());
            }
            let (m, v) = (self.m.t(id), self.v.t(id));
            let p = self.model.params.t_mut(id);
            for ((p, m), v) in p.iter_mut().zip(m).zip(v) {
                let mh = m.f64() / c1;
                let vh = v.f64() / c2;
                *p = T::of(p.f64() - lr * mh / (vh.sqrt() + eps));
            }
        }
        self.step += 1;
        Ok(StepReport {
            step,
            lr,
            loss,
            grad_norm,
            applied: true,
        })
    }

    /// Trains for up to `steps` further steps on batches drawn from
    /// `examples`. `on_step` sees every report and returns false to stop.
    pub fn run(
        &mut self,
        examples: &[Example],
        steps: u64,
        mut on_step: impl FnMut(&StepReport) -> bool,
    ) -> Result<(), ModelError> {
        if examples.is_empty() {
            return Err(ModelError::Empty("training set"));
        }
        let end = self.step + steps;
        let mut attempt = self.step;
        while self.step < end {
            let idx = batch_indices(examples.len(), self.cfg.batch_size, self.cfg.seed, attempt);
            let batch: Vec<Example> = idx.iter().map(|&i| examples[i].clone()).collect();
            let report = self.train_step(&batch)?;
            attempt += 1;
            let keep_going = on_step(&report);
            if !report.applied && attempt >= end + steps {
                // every batch keeps failing; give up rather than loop forever
                break;
            }
            if !keep_going {
                break;
            }
        }
        Ok(())
    }

    pub(crate) fn from_parts(model: Model<T>, cfg: TrainConfig, m: Params<T>, v: Params<T>, step: u64) -> Self {
        Self { model, cfg, m, v, step }
    }
}
