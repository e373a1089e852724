use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use ddot_core::metrics::{divergence_field, region_from_trajectory, Region};
use ddot_core::numtok::Vocabulary;
use ddot_core::odegen::{generate_dataset, manifest_path, read_dataset, read_manifest, GenConfig};
use ddot_core::{solve_ivp, uniform_grid, IvpConfig};
use ddot_harness::evaluate::REGION_PADDING;
use ddot_harness::{
    emit_comparison, emit_report, infer_from_csv, load_benchmark, parse_system_text, run_suite, Benchmark,
    DecodeOptions, EvalReport, InferOptions, ModelPredictor, PredictionsFile, Predictor, DEFAULT_NOISE_LEVELS,
};
use ddot_model::{Checkpoint, Element, Example, InputGrid, LossRecord, Model, ModelConfig, TrainConfig, Trainer};

#[derive(Parser)]
#[command(name = "ddot", version, about = "Symbolic ODE recovery from trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenPreset {
    Default,
    Restricted,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    Toy,
    Full,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegionMode {
    Auto,
    Explicit,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (JSON lines plus a manifest).
    Gen {
        /// Generator config (JSON); overrides --preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "default")]
        preset: GenPreset,
        /// Number of generation attempts.
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Train a model on a generated dataset and write a checkpoint.
    Train {
        /// JSON with optional "model" and "train" sections replacing the preset's.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        steps: u64,
        #[arg(long, value_enum, default_value = "toy")]
        preset: Preset,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the training seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the derivative-loss weight.
        #[arg(long)]
        lambda_der: Option<f64>,
        /// Per-step loss log (JSON lines); defaults to `<out>.log.jsonl`.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "f32")]
        precision: Precision,
        /// Continue from a training checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a checkpoint and/or prediction files on a benchmark.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Predictions file of an external method; may be repeated.
        #[arg(long)]
        predictions: Vec<PathBuf>,
        /// Benchmark file; the bundled mini-benchmark when omitted.
        #[arg(long)]
        benchmark: Option<PathBuf>,
        /// Comma-separated noise levels.
        #[arg(long, value_delimiter = ',')]
        noise_levels: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Beam width for checkpoint decoding (1 = greedy).
        #[arg(long, default_value_t = 8)]
        beam: usize,
        /// Keep the most likely hypothesis instead of the best-fitting one.
        #[arg(long)]
        no_rerank: bool,
    },
    /// Recover a system from CSV data.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        /// Time column then value columns, comma-separated.
        #[arg(long, value_delimiter = ',')]
        columns: Option<Vec<String>>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        beam: usize,
    },
    /// Write the divergence field of a system over a grid as CSV.
    Divfield {
        /// Prefix or infix text, equations separated by `|`.
        #[arg(long)]
        system: String,
        #[arg(long, value_enum, default_value = "auto")]
        region: RegionMode,
        /// Initial condition for the automatic region, comma-separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        ic: Option<Vec<f64>>,
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        /// Explicit bounds such as `-1:1,-2:2`.
        #[arg(long, allow_hyphen_values = true)]
        bounds: Option<String>,
        /// Points per axis for explicit regions.
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn set_workers(n: usize) -> Result<()> {
    ensure!(n >= 1, "--workers must be at least 1");
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring worker pool")
}

fn gen(config: Option<PathBuf>, preset: GenPreset, count: usize, out: PathBuf, seed: u64, workers: usize) -> Result<()> {
    set_workers(workers)?;
    let cfg = match config {
        Some(p) => serde_json::from_str(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => match preset {
            GenPreset::Default => GenConfig::default(),
            GenPreset::Restricted => GenConfig::restricted_family(),
        },
    };
    let summary = generate_dataset(&cfg, count, seed, workers, &out)?;
    eprintln!(
        "{} attempts, {} accepted, {} discarded",
        summary.attempts,
        summary.accepted,
        summary.discarded_total()
    );
    for (reason, n) in &summary.discarded {
        eprintln!("  {reason:?}: {n}");
    }
    Ok(())
}

#[derive(Deserialize, Default)]
struct TrainFile {
    model: Option<ModelConfig>,
    train: Option<TrainConfig>,
}

struct TrainArgs {
    config: Option<PathBuf>,
    data: PathBuf,
    steps: u64,
    preset: Preset,
    out: PathBuf,
    seed: Option<u64>,
    lambda_der: Option<f64>,
    log: Option<PathBuf>,
    resume: Option<PathBuf>,
}

fn train<T: Element>(a: TrainArgs) -> Result<()> {
    let file: TrainFile = match &a.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => TrainFile::default(),
    };
    let (mut mcfg, mut tcfg) = match a.preset {
        Preset::Toy => (ModelConfig::toy(), TrainConfig::toy()),
        Preset::Full => (ModelConfig::full(), TrainConfig::full()),
    };
    if let Some(m) = file.model {
        mcfg = m;
    }
    if let Some(t) = file.train {
        tcfg = t;
    }
    if let Some(s) = a.seed {
        tcfg.seed = s;
    }
    if let Some(l) = a.lambda_der {
        tcfg.lambda_der = l;
    }
    let vocab = Vocabulary::new(mcfg.vocab);
    let records = read_dataset(&a.data)?;
    let grid = read_manifest(&manifest_path(&a.data)).ok().map(|m| InputGrid {
        t_end: m.config.t_end,
        points: m.config.n_points,
    });
    let mut examples = Vec::with_capacity(records.len());
    let mut skipped = 0usize;
    for (i, r) in records.iter().enumerate() {
        match Example::from_record(r, tcfg.der_steps, &vocab, &mcfg) {
            Ok(e) => examples.push(e),
            Err(ddot_model::DataError::TooLong { .. }) => skipped += 1,
            Err(e) => bail!("record {}: {e}", i + 1),
        }
    }
    ensure!(!examples.is_empty(), "no usable training records in {}", a.data.display());
    if skipped > 0 {
        eprintln!("skipped {skipped} records longer than the model limits");
    }
    let mut trainer: Trainer<T> = match &a.resume {
        Some(p) => Checkpoint::load(p)?.to_trainer(Some(&vocab))?,
        None => Trainer::new(Model::new(mcfg, tcfg.seed)?, tcfg)?,
    };
    let log_path = a.log.clone().unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".log.jsonl");
        PathBuf::from(s)
    });
    let mut log = std::io::BufWriter::new(
        fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?,
    );
    let mut io_err = None;
    let mut rejected = 0u64;
    trainer.run(&examples, a.steps, |r| {
        if !r.applied {
            rejected += 1;
        }
        let line = serde_json::to_string(&LossRecord::from(r)).expect("record serializes");
        if let Err(e) = writeln!(log, "{line}") {
            io_err = Some(e);
            return false;
        }
        true
    })?;
    if let Some(e) = io_err {
        return Err(e).context("writing training log");
    }
    log.flush()?;
    if rejected > 0 {
        eprintln!("{rejected} steps rejected for non-finite values");
    }
    let mut ck = Checkpoint::from_trainer(&trainer);
    ck.input_grid = grid;
    ck.save(&a.out)?;
    eprintln!("trained to step {}; checkpoint at {}", trainer.step, a.out.display());
    Ok(())
}

fn load_model(path: &Path) -> Result<(Model<f32>, Option<InputGrid>)> {
    let ck = Checkpoint::load(path)?;
    Ok((ck.to_model(None)?, ck.input_grid))
}

#[allow(clippy::too_many_arguments)]
fn eval(
    checkpoint: Option<PathBuf>,
    predictions: Vec<PathBuf>,
    benchmark: Option<PathBuf>,
    noise_levels: Option<Vec<f64>>,
    seed: u64,
    out: PathBuf,
    workers: usize,
    opts: DecodeOptions,
) -> Result<()> {
    set_workers(workers)?;
    ensure!(
        checkpoint.is_some() || !predictions.is_empty(),
        "give --checkpoint and/or --predictions"
    );
    let bench = match &benchmark {
        Some(p) => load_benchmark(p)?,
        None => Benchmark::bundled(),
    };
    let levels = noise_levels.unwrap_or_else(|| DEFAULT_NOISE_LEVELS.to_vec());
    ensure!(
        !levels.is_empty() && levels.iter().all(|s| s.is_finite() && *s >= 0.0),
        "noise levels must be non-negative"
    );
    let mut predictors: Vec<Box<dyn Predictor>> = Vec::new();
    if let Some(p) = &checkpoint {
        let (model, _) = load_model(p)?;
        predictors.push(Box::new(ModelPredictor::new(model, opts)));
    }
    for p in &predictions {
        predictors.push(Box::new(PredictionsFile::load(p)?));
    }
    let mut names = BTreeSet::new();
    for p in &predictors {
        ensure!(names.insert(p.method().to_string()), "duplicate method name {:?}", p.method());
    }
    let reports: Vec<EvalReport> = predictors
        .iter()
        .map(|p| run_suite(p.as_ref(), &bench, &levels, seed))
        .collect::<Result<_, _>>()?;
    if let [only] = reports.as_slice() {
        emit_report(only, &bench, &out)?;
    } else {
        for r in &reports {
            emit_report(r, &bench, &out.join(&r.method))?;
        }
        emit_comparison(&reports.iter().collect::<Vec<_>>(), &out)?;
    }
    for r in &reports {
        for a in &r.aggregates {
            eprintln!(
                "{} noise {}: P_rec {:.3} P_gen {:.3} DIV-diff {}",
                r.method,
                a.noise,
                a.p_r2_reconstruction,
                a.p_r2_generalization,
                a.mean_div_diff.map_or("-".into(), |d| format!("{d:.4}"))
            );
        }
    }
    Ok(())
}

fn infer(checkpoint: PathBuf, csv: PathBuf, columns: Option<Vec<String>>, out: PathBuf, beam: usize) -> Result<()> {
    let (model, grid) = load_model(&checkpoint)?;
    let predictor = ModelPredictor::new(
        model,
        DecodeOptions {
            beam,
            ..DecodeOptions::default()
        },
    );
    let mut opts = InferOptions::default();
    if let Some(g) = grid {
        opts.t_end = g.t_end;
        opts.steps = g.points;
    }
    let result = infer_from_csv(&predictor, &csv, columns.as_deref(), &opts)?;
    fs::write(&out, serde_json::to_string_pretty(&result)?).with_context(|| format!("writing {}", out.display()))?;
    eprintln!("{}  (R2 {:.4})", result.system_infix, result.r2);
    Ok(())
}

fn parse_bounds(text: &str) -> Result<Vec<(f64, f64)>> {
    text.split(',')
        .map(|part| {
            let (lo, hi) = part
                .split_once(':')
                .with_context(|| format!("bound {part:?} is not lo:hi"))?;
            Ok((lo.trim().parse()?, hi.trim().parse()?))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn divfield(
    system: String,
    mode: RegionMode,
    ic: Option<Vec<f64>>,
    t_end: f64,
    bounds: Option<String>,
    resolution: Option<usize>,
    out: PathBuf,
) -> Result<()> {
    let sys = parse_system_text(&system).map_err(anyhow::Error::msg)?;
    let region: Region<f64> = match mode {
        RegionMode::Auto => {
            let ic = ic.context("--region auto needs --ic")?;
            ensure!(ic.len() == sys.dim(), "--ic has {} values, system has dimension {}", ic.len(), sys.dim());
            let cfg = IvpConfig {
                budget: None,
                ..IvpConfig::default()
            };
            let traj = solve_ivp(&sys, &ic, &uniform_grid(0.0, t_end, 200), &cfg).context("integrating the system")?;
            region_from_trajectory(&traj, REGION_PADDING)?
        }
        RegionMode::Explicit => {
            let b = parse_bounds(&bounds.context("--region explicit needs --bounds")?)?;
            ensure!(b.len() == sys.dim(), "{} bounds for dimension {}", b.len(), sys.dim());
            let g = resolution.unwrap_or_else(|| ddot_core::metrics::default_resolution(sys.dim()));
            Region::new(b.clone(), vec![g; b.len()])?
        }
    };
    let field = divergence_field(&sys, &region)?;
    fs::write(&out, field.to_csv()).with_context(|| format!("writing {}", out.display()))?;
    eprintln!("{} points, {} valid", field.len(), field.valid_count());
    Ok(())
}

fn main() -> std::process::ExitCode {
    match run(Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            config,
            preset,
            count,
            out,
            seed,
            workers,
        } => gen(config, preset, count, out, seed, workers),
        Command::Train {
            config,
            data,
            steps,
            preset,
            out,
            seed,
            lambda_der,
            log,
            precision,
            resume,
        } => {
            let a = TrainArgs {
                config,
                data,
                steps,
                preset,
                out,
                seed,
                lambda_der,
                log,
                resume,
            };
            match precision {
                Precision::F32 => train::<f32>(a),
                Precision::F64 => train::<f64>(a),
            }
        }
        Command::Eval {
            checkpoint,
            predictions,
            benchmark,
            noise_levels,
            seed,
            out,
            workers,
            beam,
            no_rerank,
        } => eval(
            checkpoint,
            predictions,
            benchmark,
            noise_levels,
            seed,
            out,
            workers,
            DecodeOptions {
                beam,
                rerank_by_fit: !no_rerank,
                max_len: None,
            },
        ),
        Command::Infer {
            checkpoint,
            csv,
            columns,
            out,
            beam,
        } => infer(checkpoint, csv, columns, out, beam),
        Command::Divfield {
            system,
            region,
            ic,
            t_end,
            bounds,
            resolution,
            out,
        } => divfield(system, region, ic, t_end, bounds, resolution, out),
    }
}
