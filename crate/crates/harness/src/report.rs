use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use ddot_core::metrics::{divergence_field, p_r2_above};

use crate::benchmark::Benchmark;
use crate::evaluate::{parse_system_text, TruthContext};

pub const REPORT_VERSION: u32 = 1;
pub const R2_THRESHOLD: f64 = 0.9;

/// JSON has no infinities; scores travel as numbers or as `"-inf"`,
/// `"inf"`, `"nan"`.
mod score {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn to_repr(v: f64) -> impl Serialize {
        if v.is_finite() {
            Repr::Num(v)
        } else if v.is_nan() {
            Repr::Text("nan".into())
        } else if v > 0.0 {
            Repr::Text("inf".into())
        } else {
            Repr::Text("-inf".into())
        }
    }

    fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "-inf" => Ok(f64::NEG_INFINITY),
                "inf" => Ok(f64::INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(E::custom(format!("bad score {other:?}"))),
            },
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    pub mod opt {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            v.map(to_repr).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            Option::<Repr>::deserialize(d)?.map(from_repr).transpose()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "detail")]
pub enum Failure {
    MissingPrediction,
    InvalidPrediction(String),
    DimensionMismatch,
    /// The prediction could not be integrated from the reconstruction
    /// initial condition.
    ReconstructionDiverged,
    GeneralizationDiverged,
    /// The entry has no second initial condition.
    GeneralizationSkipped,
    Divergence(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub entry_id: String,
    pub noise: f64,
    /// Predicted system as prefix text.
    pub predicted: Option<String>,
    /// `-inf` marks a failed prediction.
    #[serde(with = "score")]
    pub r2_reconstruction: f64,
    /// `None` when skipped for lack of a second initial condition.
    #[serde(with = "score::opt")]
    pub r2_generalization: Option<f64>,
    pub div_diff: Option<f64>,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub noise: f64,
    pub entries: usize,
    pub p_r2_reconstruction: f64,
    pub p_r2_generalization: f64,
    pub generalization_scored: usize,
    pub generalization_skipped: usize,
    /// Mean over entries with a DIV-diff; `None` when there are none.
    pub mean_div_diff: Option<f64>,
    pub div_scored: usize,
    pub div_failed: usize,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed report: {0}")]
    Format(String),
    #[error("unsupported report version {0}")]
    Version(u32),
    #[error("aggregates do not match the records at noise {0}")]
    Inconsistent(f64),
    #[error("reports use different noise levels")]
    NoiseMismatch,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Aggregates of the records at one noise level.
pub fn aggregate(noise: f64, records: &[&EvalRecord]) -> Aggregate {
    let rec: Vec<f64> = records.iter().map(|r| r.r2_reconstruction).collect();
    let gen: Vec<f64> = records.iter().filter_map(|r| r.r2_generalization).collect();
    let divs: Vec<f64> = records.iter().filter_map(|r| r.div_diff).collect();
    let p = |s: &[f64]| if s.is_empty() { 0.0 } else { p_r2_above(s, R2_THRESHOLD).unwrap_or(0.0) };
    Aggregate {
        noise,
        entries: records.len(),
        p_r2_reconstruction: p(&rec),
        p_r2_generalization: p(&gen),
        generalization_scored: gen.len(),
        generalization_skipped: records.iter().filter(|r| r.r2_generalization.is_none()).count(),
        mean_div_diff: (!divs.is_empty()).then(|| divs.iter().sum::<f64>() / divs.len() as f64),
        div_scored: divs.len(),
        div_failed: records.len() - divs.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub method: String,
    pub benchmark: String,
    pub benchmark_hash: String,
    pub seed: u64,
    pub noise_levels: Vec<f64>,
    /// Ordered by noise level, then benchmark order.
    pub records: Vec<EvalRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl EvalReport {
    pub fn recompute_aggregates(&self) -> Vec<Aggregate> {
        self.noise_levels
            .iter()
            .map(|&n| {
                let at: Vec<&EvalRecord> = self.records.iter().filter(|r| r.noise == n).collect();
                aggregate(n, &at)
            })
            .collect()
    }

    pub fn verify(&self) -> Result<(), ReportError> {
        let fresh = self.recompute_aggregates();
        if fresh.len() != self.aggregates.len() {
            return Err(ReportError::Inconsistent(f64::NAN));
        }
        for (a, b) in fresh.iter().zip(&self.aggregates) {
            if a != b {
                return Err(ReportError::Inconsistent(b.noise));
            }
        }
        Ok(())
    }

    pub fn aggregate_at(&self, noise: f64) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.noise == noise)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Parses and checks that the aggregates match the records.
    pub fn parse(text: &str) -> Result<Self, ReportError> {
        let r: Self = serde_json::from_str(text).map_err(|e| ReportError::Format(e.to_string()))?;
        if r.version != REPORT_VERSION {
            return Err(ReportError::Version(r.version));
        }
        r.verify()?;
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        Self::parse(&fs::read_to_string(path).map_err(io_err(path))?)
    }
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map_or("-".into(), |v| format!("{v:.digits$}"))
}

/// Plain-text tables with one row per method and one column per noise level:
/// reconstruction and generalization `P(R2 > 0.9)`, then mean DIV-diff.
pub fn render_tables(reports: &[&EvalReport]) -> Result<String, ReportError> {
    let Some(first) = reports.first() else {
        return Ok(String::new());
    };
    if reports.iter().any(|r| r.noise_levels != first.noise_levels) {
        return Err(ReportError::NoiseMismatch);
    }
    let width = reports.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let blocks: [(&str, &dyn Fn(&Aggregate) -> Option<f64>, usize); 3] = [
        ("Reconstruction P(R2 > 0.9)", &|a| Some(a.p_r2_reconstruction), 3),
        ("Generalization P(R2 > 0.9)", &|a| Some(a.p_r2_generalization), 3),
        ("DIV-diff (mean, lower is better)", &|a| a.mean_div_diff, 3),
    ];
    for (title, get, digits) in blocks {
        writeln!(out, "{title}").unwrap();
        write!(out, "{:<width$}", "method").unwrap();
        for n in &first.noise_levels {
            write!(out, " | {:>8}", format!("{n}")).unwrap();
        }
        out.push('\n');
        writeln!(out, "{}", "-".repeat(width + 11 * first.noise_levels.len())).unwrap();
        for r in reports {
            write!(out, "{:<width$}", r.method).unwrap();
            for n in &first.noise_levels {
                let v = r.aggregate_at(*n).and_then(get);
                write!(out, " | {:>8}", cell(v, digits)).unwrap();
            }
            out.push('\n');
        }
        out.push('\n');
    }
    Ok(out)
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes `report.json`, `tables.txt` and divergence-field CSVs
/// (`divfield/<entry>/truth.csv`, `divfield/<entry>/pred_noise_<level>.csv`).
pub fn emit_report(report: &EvalReport, bench: &Benchmark, dir: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let write = |path: PathBuf, text: &str| fs::write(&path, text).map_err(io_err(&path));
    write(dir.join("report.json"), &report.to_json())?;
    write(dir.join("tables.txt"), &render_tables(&[report])?)?;
    for entry in &bench.entries {
        let Ok(ctx) = TruthContext::new(entry) else { continue };
        let Ok(region) = ctx.region.clone() else { continue };
        let sub = dir.join("divfield").join(file_safe(&entry.id));
        fs::create_dir_all(&sub).map_err(io_err(&sub))?;
        if let Ok(f) = divergence_field(&ctx.system, &region) {
            write(sub.join("truth.csv"), &f.to_csv())?;
        }
        for r in report.records.iter().filter(|r| r.entry_id == entry.id) {
            let Some(sys) = r.predicted.as_deref().and_then(|t| parse_system_text(t).ok()) else {
                continue;
            };
            if sys.dim() != entry.dim {
                continue;
            }
            if let Ok(f) = divergence_field(&sys, &region) {
                write(sub.join(format!("pred_noise_{}.csv", file_safe(&format!("{}", r.noise)))), &f.to_csv())?;
            }
        }
    }
    Ok(())
}

/// Writes `comparison.txt` covering several methods.
pub fn emit_comparison(reports: &[&EvalReport], dir: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("comparison.txt");
    fs::write(&path, render_tables(reports)?).map_err(io_err(&path))
}
