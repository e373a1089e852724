use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use ddot_core::numtok::parse_prefix_text;
use ddot_core::{uniform_grid, OdeSystem};

pub const BENCHMARK_VERSION: u32 = 1;

const BUNDLED: &str = include_str!("../data/mini_benchmark.json");

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("benchmark file is empty")]
    Empty,
    #[error("malformed benchmark: {0}")]
    Format(String),
    #[error("unsupported benchmark version {0}")]
    Version(u32),
    #[error("entry {id}: field {field}: {msg}")]
    Entry { id: String, field: &'static str, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkEntry {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub dim: usize,
    /// One prefix expression per state component.
    pub equations: Vec<String>,
    /// The first is shown to the model (reconstruction); the second is used
    /// for generalization.
    pub initial_conditions: Vec<Vec<f64>>,
    pub t_span: (f64, f64),
    pub samples: usize,
}

impl BenchmarkEntry {
    pub fn system_text(&self) -> String {
        self.equations.join(" | ")
    }

    pub fn system(&self) -> Result<OdeSystem<f64>, BenchmarkError> {
        parse_prefix_text(&self.system_text()).map_err(|e| self.err("equations", e.to_string()))
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.t_span.0, self.t_span.1, self.samples)
    }

    pub fn reconstruction_ic(&self) -> &[f64] {
        &self.initial_conditions[0]
    }

    pub fn generalization_ic(&self) -> Option<&[f64]> {
        self.initial_conditions.get(1).map(Vec::as_slice)
    }

    fn err(&self, field: &'static str, msg: impl Into<String>) -> BenchmarkError {
        BenchmarkError::Entry {
            id: self.id.clone(),
            field,
            msg: msg.into(),
        }
    }

    pub fn validate(&self) -> Result<(), BenchmarkError> {
        if self.id.trim().is_empty() {
            return Err(self.err("id", "empty identifier"));
        }
        if self.dim == 0 {
            return Err(self.err("dim", "must be positive"));
        }
        if self.equations.len() != self.dim {
            return Err(self.err(
                "equations",
                format!("{} equations for dimension {}", self.equations.len(), self.dim),
            ));
        }
        let sys = self.system()?;
        if sys.dim() != self.dim {
            return Err(self.err("equations", format!("parsed {} equations", sys.dim())));
        }
        for e in sys.equations() {
            if let Err(err) = e.validate(self.dim) {
                return Err(self.err("equations", err.to_string()));
            }
        }
        if self.initial_conditions.is_empty() {
            return Err(self.err("initial_conditions", "at least one is required"));
        }
        for ic in &self.initial_conditions {
            if ic.len() != self.dim || ic.iter().any(|v| !v.is_finite()) {
                return Err(self.err("initial_conditions", format!("{ic:?} is not a finite {}-vector", self.dim)));
            }
        }
        let (t0, t1) = self.t_span;
        if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
            return Err(self.err("t_span", "must be finite and increasing"));
        }
        if self.samples < 2 {
            return Err(self.err("samples", "need at least two"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub version: u32,
    pub name: String,
    pub entries: Vec<BenchmarkEntry>,
}

impl Benchmark {
    pub fn parse(text: &str) -> Result<Self, BenchmarkError> {
        if text.trim().is_empty() {
            return Err(BenchmarkError::Empty);
        }
        let b: Benchmark = serde_json::from_str(text).map_err(|e| BenchmarkError::Format(e.to_string()))?;
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), BenchmarkError> {
        if self.version != BENCHMARK_VERSION {
            return Err(BenchmarkError::Version(self.version));
        }
        if self.entries.is_empty() {
            return Err(BenchmarkError::Empty);
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.entries {
            e.validate()?;
            if !seen.insert(e.id.as_str()) {
                return Err(e.err("id", "duplicate identifier"));
            }
        }
        Ok(())
    }

    /// The bundled mini-benchmark.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED).expect("bundled benchmark is valid")
    }

    pub fn entry(&self, id: &str) -> Option<&BenchmarkEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("benchmark serializes")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("benchmark serializes")
    }
}

pub fn load_benchmark(path: &Path) -> Result<Benchmark, BenchmarkError> {
    let text = fs::read_to_string(path).map_err(|source| BenchmarkError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Benchmark::parse(&text)
}
