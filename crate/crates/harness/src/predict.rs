use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use ddot_core::metrics::r_squared;
use ddot_core::numtok::Vocabulary;
use ddot_core::{solve_ivp, OdeSystem, Trajectory};
use ddot_model::{decode, DecodeMode, Model};

use crate::benchmark::BenchmarkEntry;
use crate::evaluate::{eval_ivp_config, parse_system_text};

pub const PREDICTIONS_VERSION: u32 = 1;

/// What a method produced for one observed trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    System(OdeSystem<f64>),
    /// No prediction available for this entry.
    Missing,
    /// Output that does not form a usable system.
    Invalid(String),
}

pub trait Predictor: Sync {
    fn method(&self) -> &str;

    fn predict(&self, entry: &BenchmarkEntry, noise: f64, observed: &Trajectory<f64>) -> Prediction;
}

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed predictions file: {0}")]
    Format(String),
    #[error("unsupported predictions version {0}")]
    Version(u32),
}

/// System text for an entry: one for all noise levels, or one per level
/// keyed by the level's decimal text (`"0"`, `"0.01"`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredictionText {
    Single(String),
    PerNoise(BTreeMap<String, String>),
}

/// Predictions of an external method, keyed by entry id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionsFile {
    pub version: u32,
    pub method: String,
    pub predictions: BTreeMap<String, PredictionText>,
}

pub fn noise_key(noise: f64) -> String {
    format!("{noise}")
}

impl PredictionsFile {
    pub fn parse(text: &str) -> Result<Self, PredictError> {
        let p: Self = serde_json::from_str(text).map_err(|e| PredictError::Format(e.to_string()))?;
        if p.version != PREDICTIONS_VERSION {
            return Err(PredictError::Version(p.version));
        }
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, PredictError> {
        let text = fs::read_to_string(path).map_err(|source| PredictError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// The ground truth of every entry, for oracle checks.
    pub fn oracle(bench: &crate::Benchmark) -> Self {
        Self {
            version: PREDICTIONS_VERSION,
            method: "oracle".into(),
            predictions: bench
                .entries
                .iter()
                .map(|e| (e.id.clone(), PredictionText::Single(e.system_text())))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("predictions serialize")
    }
}

impl Predictor for PredictionsFile {
    fn method(&self) -> &str {
        &self.method
    }

    fn predict(&self, entry: &BenchmarkEntry, noise: f64, _observed: &Trajectory<f64>) -> Prediction {
        let text = match self.predictions.get(&entry.id) {
            Some(PredictionText::Single(t)) => t,
            Some(PredictionText::PerNoise(m)) => match m.get(&noise_key(noise)) {
                Some(t) => t,
                None => return Prediction::Missing,
            },
            None => return Prediction::Missing,
        };
        match parse_system_text(text) {
            Ok(s) => Prediction::System(s),
            Err(e) => Prediction::Invalid(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeOptions {
    /// 1 means greedy decoding.
    pub beam: usize,
    /// Choose among beam hypotheses by R² against the observed trajectory
    /// instead of by model likelihood.
    pub rerank_by_fit: bool,
    pub max_len: Option<usize>,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            beam: 8,
            rerank_by_fit: true,
            max_len: None,
        }
    }
}

/// Candidate systems for `observed`, best first.
pub fn candidates(
    model: &Model<f32>,
    vocab: &Vocabulary,
    observed: &Trajectory<f64>,
    opts: &DecodeOptions,
) -> Result<Vec<OdeSystem<f64>>, String> {
    let grid = vocab
        .encode_trajectory(observed, model.config.max_input_steps)
        .map_err(|e| e.to_string())?;
    let mode = if opts.beam <= 1 {
        DecodeMode::Greedy
    } else {
        DecodeMode::Beam(opts.beam)
    };
    let hyps = decode(model, &grid, mode, opts.max_len).map_err(|e| e.to_string())?;
    Ok(hyps
        .iter()
        .filter(|h| h.finished)
        .filter_map(|h| vocab.decode_system_tokens::<f64>(h.body()).ok())
        .filter(|s| s.dim() == observed.dim())
        .collect())
}

/// R² of `sys` integrated from the first observed state against the
/// observation; `-inf` on integration failure.
pub fn fit_score(sys: &OdeSystem<f64>, observed: &Trajectory<f64>) -> f64 {
    match solve_ivp(sys, observed.state(0), observed.times(), &eval_ivp_config()) {
        Ok(t) => r_squared(observed, &t).unwrap_or(f64::NEG_INFINITY),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Picks the best candidate; with reranking the highest fit wins and ties go
/// to the more likely hypothesis.
pub fn select(cands: Vec<OdeSystem<f64>>, observed: &Trajectory<f64>, opts: &DecodeOptions) -> Option<OdeSystem<f64>> {
    if !opts.rerank_by_fit {
        return cands.into_iter().next();
    }
    let mut best: Option<(f64, OdeSystem<f64>)> = None;
    for c in cands {
        let s = fit_score(&c, observed);
        let s = if s.is_nan() { f64::NEG_INFINITY } else { s };
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, c));
        }
    }
    best.map(|(_, c)| c)
}

/// A trained model used as a predictor.
pub struct ModelPredictor {
    pub model: Model<f32>,
    pub vocab: Vocabulary,
    pub options: DecodeOptions,
    pub name: String,
}

impl ModelPredictor {
    pub fn new(model: Model<f32>, options: DecodeOptions) -> Self {
        Self {
            vocab: Vocabulary::new(model.config.vocab),
            model,
            options,
            name: "ddot".into(),
        }
    }

    pub fn predict_observed(&self, observed: &Trajectory<f64>) -> Prediction {
        match candidates(&self.model, &self.vocab, observed, &self.options) {
            Err(e) => Prediction::Invalid(e),
            Ok(c) => match select(c, observed, &self.options) {
                Some(s) => Prediction::System(s),
                None => Prediction::Invalid("no decodable hypothesis".into()),
            },
        }
    }
}

impl Predictor for ModelPredictor {
    fn method(&self) -> &str {
        &self.name
    }

    fn predict(&self, _entry: &BenchmarkEntry, _noise: f64, observed: &Trajectory<f64>) -> Prediction {
        self.predict_observed(observed)
    }
}
