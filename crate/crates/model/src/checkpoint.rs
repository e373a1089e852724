//! Versioned JSON checkpoints.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use ddot_core::numtok::Vocabulary;

use crate::config::{ModelConfig, TrainConfig};
use crate::element::Element;
use crate::network::{Model, ModelError};
use crate::params::Params;
use crate::train::Trainer;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("vocabulary hash mismatch: checkpoint has {found}, expected {expected}")]
    VocabMismatch { expected: String, found: String },
    #[error("model config hash mismatch")]
    ConfigMismatch,
    #[error("tensor {0} missing or misshapen")]
    Tensor(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Time span and sample count of the training trajectories, so inference can
/// present new data on the same grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputGrid {
    pub t_end: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model_config: ModelConfig,
    pub model_config_hash: String,
    pub train_config: Option<TrainConfig>,
    pub train_config_hash: Option<String>,
    pub vocab_hash: String,
    pub step: u64,
    pub tensors: Vec<TensorRecord>,
    /// Adam moments, present in training checkpoints.
    pub first_moments: Option<Vec<TensorRecord>>,
    pub second_moments: Option<Vec<TensorRecord>>,
    #[serde(default)]
    pub input_grid: Option<InputGrid>,
}

fn records<T: Element>(p: &Params<T>) -> Vec<TensorRecord> {
    p.tensors()
        .map(|(s, t)| TensorRecord {
            name: s.name.clone(),
            shape: s.shape.clone(),
            values: t.iter().map(|v| v.f64()).collect(),
        })
        .collect()
}

fn restore<T: Element>(into: &mut Params<T>, recs: &[TensorRecord]) -> Result<(), CheckpointError> {
    if recs.len() != into.len() {
        return Err(CheckpointError::Format(format!(
            "{} tensors, model has {}",
            recs.len(),
            into.len()
        )));
    }
    for (id, r) in recs.iter().enumerate() {
        let spec = &into.specs()[id];
        if spec.name != r.name || spec.shape != r.shape || r.values.len() != spec.len() {
            return Err(CheckpointError::Tensor(r.name.clone()));
        }
        into.replace_data(id, r.values.iter().map(|&v| T::of(v)).collect());
    }
    Ok(())
}

impl Checkpoint {
    pub fn from_model<T: Element>(model: &Model<T>, step: u64) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            model_config: model.config.clone(),
            model_config_hash: model.config.hash(),
            train_config: None,
            train_config_hash: None,
            vocab_hash: model.vocab_hash().to_string(),
            step,
            tensors: records(&model.params),
            first_moments: None,
            second_moments: None,
            input_grid: None,
        }
    }

    pub fn from_trainer<T: Element>(tr: &Trainer<T>) -> Self {
        Self {
            train_config: Some(tr.cfg.clone()),
            train_config_hash: Some(tr.cfg.hash()),
            first_moments: Some(records(tr.first_moments())),
            second_moments: Some(records(tr.second_moments())),
            ..Self::from_model(&tr.model, tr.step)
        }
    }

    fn check(&self, vocab: Option<&Vocabulary>) -> Result<(), CheckpointError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(self.version));
        }
        if self.model_config.hash() != self.model_config_hash {
            return Err(CheckpointError::ConfigMismatch);
        }
        let own = Vocabulary::new(self.model_config.vocab).hash();
        let expected = vocab.map_or(own.clone(), |v| v.hash());
        if self.vocab_hash != own || self.vocab_hash != expected {
            return Err(CheckpointError::VocabMismatch {
                expected,
                found: self.vocab_hash.clone(),
            });
        }
        Ok(())
    }

    /// Rebuilds the model. When `vocab` is given its hash must match.
    pub fn to_model<T: Element>(&self, vocab: Option<&Vocabulary>) -> Result<Model<T>, CheckpointError> {
        self.check(vocab)?;
        let mut model = Model::new(self.model_config.clone(), 0)?;
        restore(&mut model.params, &self.tensors)?;
        Ok(model)
    }

    /// Rebuilds a trainer, including optimizer state when present.
    pub fn to_trainer<T: Element>(&self, vocab: Option<&Vocabulary>) -> Result<Trainer<T>, CheckpointError> {
        let model: Model<T> = self.to_model(vocab)?;
        let cfg = self
            .train_config
            .clone()
            .ok_or_else(|| CheckpointError::Format("no training config".into()))?;
        let mut m = model.params.zeros_like();
        let mut v = model.params.zeros_like();
        if let (Some(fm), Some(sm)) = (&self.first_moments, &self.second_moments) {
            restore(&mut m, fm)?;
            restore(&mut v, sm)?;
        }
        Ok(Trainer::from_parts(model, cfg, m, v, self.step))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, CheckpointError> {
        serde_json::from_str(s).map_err(|e| CheckpointError::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_json()).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let s = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&s)
    }
}
