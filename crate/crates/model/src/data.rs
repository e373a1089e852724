use ddot_core::numtok::{TokError, TokenGrid, TokenId, Vocabulary};
use ddot_core::odegen::DatasetRecord;
use ddot_core::{OdeSystem, Trajectory};
use thiserror::Error;

use crate::config::ModelConfig;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("tokenization failed: {0}")]
    Token(#[from] TokError),
    #[error("bad trajectory: {0}")]
    Trajectory(#[from] ddot_core::TrajectoryError),
    #[error("record was written with vocabulary {found}, model expects {expected}")]
    VocabMismatch { expected: String, found: String },
    #[error("{what} has {len} tokens, limit {max}")]
    TooLong { what: &'static str, len: usize, max: usize },
}

/// One supervised sample: tokenized encoder input plus both full target
/// sequences (`BOS ... EOS`).
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub grid: TokenGrid,
    pub ode: Vec<TokenId>,
    pub der: Vec<TokenId>,
}

/// `count` evenly spaced indices in `0..n`, always including both ends; all of
/// them when `count` is 0 or at least `n`.
pub fn even_indices(n: usize, count: usize) -> Vec<usize> {
    if count == 0 || count >= n {
        return (0..n).collect();
    }
    if count == 1 {
        return vec![0];
    }
    (0..count)
        .map(|i| ((i * (n - 1)) as f64 / (count - 1) as f64).round() as usize)
        .collect()
}

impl Example {
    pub fn new(
        system: &OdeSystem<f64>,
        input: &Trajectory<f64>,
        derivatives: &[Vec<f64>],
        der_steps: usize,
        vocab: &Vocabulary,
        cfg: &ModelConfig,
    ) -> Result<Self, DataError> {
        let grid = vocab.encode_trajectory(input, cfg.max_input_steps)?;
        let ode = vocab.encode_system(system)?.ids;
        if ode.len() > cfg.max_ode_len {
            return Err(DataError::TooLong {
                what: "ODE target",
                len: ode.len(),
                max: cfg.max_ode_len,
            });
        }
        let picked: Vec<Vec<f64>> = even_indices(derivatives.len(), der_steps)
            .into_iter()
            .map(|i| derivatives[i].clone())
            .collect();
        let der = vocab.encode_derivative_sequence(&picked, cfg.max_der_len)?.ids;
        Ok(Self { grid, ode, der })
    }

    /// Builds from a dataset line; the encoder sees the stored (noisy) states.
    pub fn from_record(
        rec: &DatasetRecord,
        der_steps: usize,
        vocab: &Vocabulary,
        cfg: &ModelConfig,
    ) -> Result<Self, DataError> {
        if rec.vocab_hash != vocab.hash() {
            return Err(DataError::VocabMismatch {
                expected: vocab.hash(),
                found: rec.vocab_hash.clone(),
            });
        }
        let system = rec.system(vocab)?;
        Self::new(&system, &rec.noisy()?, &rec.derivatives, der_steps, vocab, cfg)
    }
}
