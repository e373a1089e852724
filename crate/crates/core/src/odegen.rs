//! Random ODE systems and the training-set pipeline built on them:
//! sample a system, integrate it from a random initial condition, label the
//! trajectory with `f(x(t_i))`, corrupt it with noise and write JSON lines.
//!
//! Every attempt is a pure function of `(config, seed)`; dataset attempt `i`
//! uses `base_seed + i`, so output is independent of the worker count.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{BinaryOp, Expression, OdeSystem, UnaryOp};
use crate::integrator::{solve_ivp, FailureReason, IvpConfig, IvpError};
use crate::numtok::{TokError, VocabConfig, Vocabulary};
use crate::trajectory::{uniform_grid, Trajectory, TrajectoryError};

pub const DATASET_VERSION: u32 = 1;
const NOISE_STREAM: u64 = 1;
const SYSTEM_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub d_max: usize,
    /// Relative weight of dimension `k + 1`; entries past `d_max` are ignored.
    pub dim_weights: Vec<f64>,
    pub max_depth: usize,
    pub max_binary_ops: usize,
    pub unary_prob: f64,
    /// Chance that a non-root node above the depth limit is a leaf.
    pub leaf_prob: f64,
    /// Chance that a leaf is a variable rather than a constant.
    pub var_leaf_prob: f64,
    pub binary_ops: Vec<(BinaryOp, f64)>,
    pub unary_ops: Vec<(UnaryOp, f64)>,
    /// Constant magnitudes are log-uniform on this range with a uniform sign.
    pub const_range: (f64, f64),
    pub ic_range: (f64, f64),
    pub ic_attempts: usize,
    pub t_end: f64,
    pub n_points: usize,
    pub min_points: usize,
    pub ivp: IvpConfig,
    /// Each sample draws its noise level uniformly from this list.
    pub noise_levels: Vec<f64>,
    /// Derivative labels from the clean trajectory (otherwise from the noisy one).
    pub clean_targets: bool,
    pub vocab: VocabConfig,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            d_max: 4,
            dim_weights: vec![23.0, 28.0, 10.0, 2.0],
            max_depth: 4,
            max_binary_ops: 5,
            unary_prob: 0.25,
            leaf_prob: 0.4,
            var_leaf_prob: 0.5,
            binary_ops: vec![
                (BinaryOp::Add, 3.0),
                (BinaryOp::Sub, 1.0),
                (BinaryOp::Mul, 3.0),
                (BinaryOp::Div, 1.0),
            ],
            unary_ops: vec![
                (UnaryOp::Sin, 1.0),
                (UnaryOp::Cos, 1.0),
                (UnaryOp::Exp, 0.5),
                (UnaryOp::Log, 0.2),
                (UnaryOp::Sqrt, 0.2),
                (UnaryOp::Inv, 0.5),
                (UnaryOp::Pow2, 2.0),
                (UnaryOp::Pow3, 1.0),
            ],
            const_range: (0.05, 10.0),
            ic_range: (-3.0, 3.0),
            ic_attempts: 10,
            t_end: 10.0,
            n_points: 100,
            min_points: 20,
            ivp: IvpConfig::default(),
            noise_levels: vec![0.0, 0.01, 0.02, 0.03, 0.04, 0.05],
            clean_targets: true,
            vocab: VocabConfig::default(),
        }
    }
}

impl GenConfig {
    /// One-dimensional systems over `{add, mul, pow2}` with depth at most 2,
    /// toy vocabulary, noiseless, 50 points.
    pub fn restricted_family() -> Self {
        Self {
            d_max: 1,
            dim_weights: vec![1.0],
            max_depth: 2,
            max_binary_ops: 3,
            unary_prob: 0.2,
            leaf_prob: 0.3,
            binary_ops: vec![(BinaryOp::Add, 1.0), (BinaryOp::Mul, 1.0)],
            unary_ops: vec![(UnaryOp::Pow2, 1.0)],
            const_range: (0.1, 2.0),
            ic_range: (-2.0, 2.0),
            n_points: 50,
            noise_levels: vec![0.0],
            vocab: VocabConfig::toy(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |msg: String| Err(GenError::InvalidConfig(msg));
        if self.d_max == 0 || self.d_max > self.vocab.max_dim {
            return bad(format!("d_max {} outside 1..={}", self.d_max, self.vocab.max_dim));
        }
        if self.dim_weights.len() < self.d_max {
            return bad(format!("{} dimension weights for d_max {}", self.dim_weights.len(), self.d_max));
        }
        let weights_ok = |w: &mut dyn Iterator<Item = f64>| {
            let v: Vec<f64> = w.collect();
            v.iter().all(|x| x.is_finite() && *x >= 0.0) && v.iter().sum::<f64>() > 0.0
        };
        if !weights_ok(&mut self.dim_weights[..self.d_max].iter().copied()) {
            return bad("dimension weights must be non-negative with a positive sum".into());
        }
        if !weights_ok(&mut self.binary_ops.iter().map(|p| p.1)) {
            return bad("binary operator weights must be non-negative with a positive sum".into());
        }
        if !self.unary_ops.is_empty() && !weights_ok(&mut self.unary_ops.iter().map(|p| p.1)) {
            return bad("unary operator weights must be non-negative with a positive sum".into());
        }
        for (name, p) in [
            ("unary_prob", self.unary_prob),
            ("leaf_prob", self.leaf_prob),
            ("var_leaf_prob", self.var_leaf_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        let (c0, c1) = self.const_range;
        if !(c0 > 0.0 && c1 >= c0 && c1.is_finite()) {
            return bad(format!("constant range ({c0}, {c1})"));
        }
        let (i0, i1) = self.ic_range;
        if !(i0.is_finite() && i1.is_finite() && i1 > i0) {
            return bad(format!("initial-condition range ({i0}, {i1})"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) || self.n_points < 2 || self.ic_attempts == 0 {
            return bad("time span, point count and attempt count must be positive".into());
        }
        if !(self.ivp.rtol > 0.0 && self.ivp.atol > 0.0) || self.ivp.max_steps == 0 {
            return bad("integrator tolerances and step cap must be positive".into());
        }
        if self.noise_levels.is_empty() || self.noise_levels.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("noise levels must be a non-empty list of finite values >= 0".into());
        }
        Ok(())
    }

    /// Dimension probabilities `P(d = k + 1)`.
    pub fn dim_probabilities(&self) -> Vec<f64> {
        let w = &self.dim_weights[..self.d_max];
        let total: f64 = w.iter().sum();
        w.iter().map(|x| x / total).collect()
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("no equation with a variable leaf after {0} attempts")]
    NoVariable(usize),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed dataset record at line {line}: {msg}")]
    Record { line: usize, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GenError + '_ {
    move |source| GenError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

struct TreeSampler<'a> {
    cfg: &'a GenConfig,
    vocab: &'a Vocabulary,
    dim: usize,
    binary: WeightedIndex<f64>,
    unary: Option<WeightedIndex<f64>>,
}

impl TreeSampler<'_> {
    fn node(&self, rng: &mut ChaCha8Rng, depth: usize, binary_left: &mut usize) -> Expression<f64> {
        if depth >= self.cfg.max_depth || (depth > 0 && rng.random::<f64>() < self.cfg.leaf_prob) {
            return self.leaf(rng);
        }
        let want_unary = self.unary.is_some() && rng.random::<f64>() < self.cfg.unary_prob;
        if !want_unary && *binary_left > 0 {
            *binary_left -= 1;
            let op = self.cfg.binary_ops[self.binary.sample(rng)].0;
            let lhs = self.node(rng, depth + 1, binary_left);
            let rhs = self.node(rng, depth + 1, binary_left);
            return Expression::binary(op, lhs, rhs);
        }
        match &self.unary {
            Some(dist) => {
                let op = self.cfg.unary_ops[dist.sample(rng)].0;
                Expression::unary(op, self.node(rng, depth + 1, binary_left))
            }
            None => self.leaf(rng),
        }
    }

    fn leaf(&self, rng: &mut ChaCha8Rng) -> Expression<f64> {
        if rng.random::<f64>() < self.cfg.var_leaf_prob {
            return Expression::Var(rng.random_range(0..self.dim));
        }
        let (lo, hi) = self.cfg.const_range;
        let mag = (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp();
        let c = if rng.random::<bool>() { -mag } else { mag };
        // constants live on the tokenizer's grid so targets encode exactly
        Expression::Const(self.vocab.round_float(c).unwrap_or(c))
    }
}

fn sample_with(cfg: &GenConfig, vocab: &Vocabulary, rng: &mut ChaCha8Rng) -> Result<OdeSystem<f64>, GenError> {
    let dims = WeightedIndex::new(&cfg.dim_weights[..cfg.d_max]).map_err(|e| GenError::InvalidConfig(e.to_string()))?;
    let dim = dims.sample(rng) + 1;
    let binary = WeightedIndex::new(cfg.binary_ops.iter().map(|p| p.1))
        .map_err(|e| GenError::InvalidConfig(e.to_string()))?;
    let unary = if cfg.unary_ops.is_empty() {
        None
    } else {
        Some(WeightedIndex::new(cfg.unary_ops.iter().map(|p| p.1)).map_err(|e| GenError::InvalidConfig(e.to_string()))?)
    };
    let sampler = TreeSampler {
        cfg,
        vocab,
        dim,
        binary,
        unary,
    };
    let mut equations = Vec::with_capacity(dim);
    for _ in 0..dim {
        let eq = (0..SYSTEM_ATTEMPTS)
            .map(|_| sampler.node(rng, 0, &mut cfg.max_binary_ops.clone()))
            .find(|e| e.has_var())
            .ok_or(GenError::NoVariable(SYSTEM_ATTEMPTS))?;
        equations.push(eq);
    }
    OdeSystem::new(equations).map_err(|e| GenError::InvalidConfig(e.to_string()))
}

/// Samples a random system: `d` from the dimension law, then `d` independent
/// trees built top-down. Equations without a variable leaf are redrawn.
pub fn sample_system(cfg: &GenConfig, seed: u64) -> Result<OdeSystem<f64>, GenError> {
    cfg.validate()?;
    let vocab = Vocabulary::new(cfg.vocab);
    sample_with(cfg, &vocab, &mut rng_for(seed))
}

/// `f(x(t_i))` for every step; `Err(i)` names the first non-finite step.
pub fn compute_derivatives(sys: &OdeSystem<f64>, traj: &Trajectory<f64>) -> Result<Vec<Vec<f64>>, usize> {
    assert_eq!(sys.dim(), traj.dim(), "system and trajectory dimensions differ");
    traj.rows()
        .enumerate()
        .map(|(i, x)| {
            let v = sys.eval(x);
            if v.iter().all(|c| c.is_finite()) {
                Ok(v)
            } else {
                Err(i)
            }
        })
        .collect()
}

/// Multiplicative Gaussian corruption `x * (1 + sigma * eps)`.
pub fn apply_noise(traj: &Trajectory<f64>, sigma: f64, seed: u64) -> Trajectory<f64> {
    assert!(sigma >= 0.0, "noise level must be non-negative");
    if sigma == 0.0 {
        return traj.clone();
    }
    let mut rng = rng_for(seed);
    rng.set_stream(NOISE_STREAM);
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let states = traj.states().iter().map(|&x| x * (1.0 + normal.sample(&mut rng))).collect();
    traj.with_states(states)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscardReason {
    IntegrationError,
    Timeout,
    NonFinite,
    TooShort,
    /// A state or label the vocabulary cannot encode.
    OutOfRange,
    Generation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discard {
    pub reason: DiscardReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSample {
    pub system: OdeSystem<f64>,
    pub clean: Trajectory<f64>,
    /// The stored encoder input: `clean` after noise at level `sigma`.
    pub noisy: Trajectory<f64>,
    pub derivatives: Vec<Vec<f64>>,
    pub sigma: f64,
    pub seed: u64,
    /// Initial conditions tried before acceptance.
    pub ic_tries: usize,
}

/// Maps an integration failure to the discard reason it is counted under.
pub fn classify(err: &IvpError) -> DiscardReason {
    match err.reason() {
        Some(FailureReason::BudgetExceeded | FailureReason::MaxSteps) => DiscardReason::Timeout,
        Some(FailureReason::NonFinite) => DiscardReason::NonFinite,
        _ => DiscardReason::IntegrationError,
    }
}

fn encodable(vocab: &Vocabulary, values: &[f64]) -> bool {
    values.iter().all(|&v| vocab.encode_float_flush(v).is_ok())
}

/// One full generation attempt. Failures come back as a [`Discard`] value.
pub fn build_sample(cfg: &GenConfig, seed: u64) -> Result<DatasetSample, Discard> {
    let vocab = Vocabulary::new(cfg.vocab);
    build_with(cfg, &vocab, seed)
}

fn build_with(cfg: &GenConfig, vocab: &Vocabulary, seed: u64) -> Result<DatasetSample, Discard> {
    let discard = |reason, detail: String| Discard { reason, detail };
    let mut rng = rng_for(seed);
    let system = sample_with(cfg, vocab, &mut rng).map_err(|e| discard(DiscardReason::Generation, e.to_string()))?;
    let sigma = cfg.noise_levels[rng.random_range(0..cfg.noise_levels.len())];
    if cfg.n_points < cfg.min_points {
        return Err(discard(
            DiscardReason::TooShort,
            format!("{} points, minimum {}", cfg.n_points, cfg.min_points),
        ));
    }
    let grid = uniform_grid(0.0, cfg.t_end, cfg.n_points);
    let (lo, hi) = cfg.ic_range;
    let mut last = discard(DiscardReason::IntegrationError, "no attempt".into());
    for attempt in 1..=cfg.ic_attempts {
        let x0: Vec<f64> = (0..system.dim()).map(|_| rng.random_range(lo..hi)).collect();
        let clean = match solve_ivp(&system, &x0, &grid, &cfg.ivp) {
            Ok(t) => t,
            Err(e) => {
                last = discard(classify(&e), e.to_string());
                continue;
            }
        };
        let noisy = apply_noise(&clean, sigma, seed);
        let label_source = if cfg.clean_targets { &clean } else { &noisy };
        let derivatives = match compute_derivatives(&system, label_source) {
            Ok(d) => d,
            Err(i) => {
                last = discard(DiscardReason::NonFinite, format!("derivative at step {i}"));
                continue;
            }
        };
        let in_range = encodable(vocab, noisy.states())
            && encodable(vocab, clean.states())
            && derivatives.iter().all(|d| encodable(vocab, d));
        if !in_range {
            last = discard(DiscardReason::OutOfRange, "value outside the vocabulary's exponent range".into());
            continue;
        }
        return Ok(DatasetSample {
            system,
            clean,
            noisy,
            derivatives,
            sigma,
            seed,
            ic_tries: attempt,
        });
    }
    Err(last)
}

/// One JSON line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub version: u32,
    pub vocab_hash: String,
    pub seed: u64,
    pub sigma: f64,
    pub system_prefix_tokens: Vec<String>,
    pub times: Vec<f64>,
    /// Noisy states, one row per time step.
    pub states: Vec<Vec<f64>>,
    pub clean_states: Vec<Vec<f64>>,
    pub derivatives: Vec<Vec<f64>>,
}

impl DatasetRecord {
    pub fn from_sample(sample: &DatasetSample, vocab: &Vocabulary) -> Result<Self, TokError> {
        let rows = |t: &Trajectory<f64>| t.rows().map(<[f64]>::to_vec).collect();
        Ok(Self {
            version: DATASET_VERSION,
            vocab_hash: vocab.hash(),
            seed: sample.seed,
            sigma: sample.sigma,
            system_prefix_tokens: vocab.render(&vocab.system_tokens(&sample.system)?),
            times: sample.clean.times().to_vec(),
            states: rows(&sample.noisy),
            clean_states: rows(&sample.clean),
            derivatives: sample.derivatives.clone(),
        })
    }

    pub fn system(&self, vocab: &Vocabulary) -> Result<OdeSystem<f64>, TokError> {
        let words: Vec<&str> = self.system_prefix_tokens.iter().map(String::as_str).collect();
        vocab.decode_system_tokens(&vocab.lookup(&words)?)
    }

    pub fn noisy(&self) -> Result<Trajectory<f64>, TrajectoryError> {
        Trajectory::from_rows(self.times.clone(), &self.states)
    }

    pub fn clean(&self) -> Result<Trajectory<f64>, TrajectoryError> {
        Trajectory::from_rows(self.times.clone(), &self.clean_states)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenSummary {
    pub attempts: usize,
    pub accepted: usize,
    pub discarded: BTreeMap<DiscardReason, usize>,
}

impl GenSummary {
    pub fn discarded_total(&self) -> usize {
        self.discarded.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub vocab_hash: String,
    pub base_seed: u64,
    pub count: usize,
    pub config: GenConfig,
    pub summary: GenSummary,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

const CHUNK: usize = 512;

/// Runs `count` attempts with seeds `base_seed..base_seed + count` on
/// `workers` threads, writing accepted samples in attempt order to `out` and
/// the manifest next to it.
pub fn generate_dataset(
    cfg: &GenConfig,
    count: usize,
    base_seed: u64,
    workers: usize,
    out: &Path,
) -> Result<GenSummary, GenError> {
    cfg.validate()?;
    let vocab = Vocabulary::new(cfg.vocab);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| GenError::InvalidConfig(e.to_string()))?;
    let mut writer = BufWriter::new(File::create(out).map_err(io_err(out))?);
    let mut summary = GenSummary::default();
    for start in (0..count).step_by(CHUNK) {
        let end = (start + CHUNK).min(count);
        let lines: Vec<Result<String, DiscardReason>> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|i| {
                    let seed = base_seed.wrapping_add(i as u64);
                    let sample = build_with(cfg, &vocab, seed).map_err(|d| d.reason)?;
                    let record = DatasetRecord::from_sample(&sample, &vocab).map_err(|_| DiscardReason::OutOfRange)?;
                    Ok(serde_json::to_string(&record).expect("records serialize"))
                })
                .collect()
        });
        for line in lines {
            summary.attempts += 1;
            match line {
                Ok(l) => {
                    summary.accepted += 1;
                    writeln!(writer, "{l}").map_err(io_err(out))?;
                }
                Err(r) => *summary.discarded.entry(r).or_default() += 1,
            }
        }
    }
    writer.flush().map_err(io_err(out))?;
    let manifest = Manifest {
        version: DATASET_VERSION,
        vocab_hash: vocab.hash(),
        base_seed,
        count,
        config: cfg.clone(),
        summary: summary.clone(),
    };
    let mpath = manifest_path(out);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&mpath, text + "\n").map_err(io_err(&mpath))?;
    Ok(summary)
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>, GenError> {
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(&line).map_err(|e| GenError::Record {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if rec.version != DATASET_VERSION {
            return Err(GenError::Record {
                line: i + 1,
                msg: format!("unsupported version {}", rec.version),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, GenError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| GenError::Record {
        line: 0,
        msg: e.to_string(),
    })
}
