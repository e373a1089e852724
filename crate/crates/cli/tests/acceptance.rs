//! Acceptance criteria 1 to 10, one PASS/FAIL line each.
//!
//! Runs as a plain binary so the lines are always shown. Numeric arguments
//! select criteria, e.g. `cargo test --test acceptance -- 1 2 3`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ddot_core::expr::{parse_infix_system, BinaryOp, Expression, OdeSystem};
use ddot_core::integrator::{solve_ivp, IvpConfig};
use ddot_core::metrics::{div_diff, divergence_field, r_squared, Region};
use ddot_core::numtok::{VocabConfig, Vocabulary};
use ddot_core::odegen::{build_sample, generate_dataset, read_dataset, sample_system, GenConfig};
use ddot_core::trajectory::{uniform_grid, Trajectory};
use ddot_harness::predict::{PredictionText, PREDICTIONS_VERSION};
use ddot_harness::{
    run_suite, Benchmark, BenchmarkEntry, DecodeOptions, ModelPredictor, PredictionsFile, TruthContext,
    DEFAULT_NOISE_LEVELS,
};
use ddot_model::gradcheck::GradCheckConfig;
use ddot_model::{decode, grad_check, lr_schedule, DecodeMode, Example, Model, ModelConfig, Params, TrainConfig, Trainer};

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, Duration, Check); 10] = [
        (1, "tokenization fidelity", secs(1), tokenization),
        (2, "integrator oracle", secs(10), integrator),
        (3, "divergence oracle", secs(5), divergence),
        (4, "metric semantics", secs(5), metric_semantics),
        (5, "gradient check", secs(60), gradient_check),
        (6, "schedule endpoints", secs(1), schedule),
        (7, "overfit closure", secs(15 * 60), overfit),
        (8, "desk-scale learning", secs(2 * 3600), desk_scale),
        (9, "full-scale table numbers", secs(1), declared),
        (10, "pipeline determinism", secs(3600), determinism),
    ];
    let mut failed = 0;
    for (n, name, limit, check) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(d) if took > limit => Err(format!("{d}; took {took:.1?}, limit {limit:?}")),
            o => o,
        };
        match outcome {
            Ok(d) => println!("criterion {n:>2} {name}: PASS ({d}) [{:.1}s]", took.as_secs_f64()),
            Err(d) => {
                failed += 1;
                println!("criterion {n:>2} {name}: FAIL ({d}) [{:.1}s]", took.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

#[allow(clippy::approx_constant)]
fn tokenization() -> Result<String, String> {
    let v = Vocabulary::new(VocabConfig::default());
    let pi = v.render(&v.encode_float(3.14).map_err(|e| e.to_string())?);
    ensure!(pi == ["+", "N0314", "E-2"], "3.14 encodes as {pi:?}");
    let sys: OdeSystem<f64> = parse_infix_system("-x_1 + 0.1 * x_0 | x_0 + 0.1 * x_1").map_err(|e| e.to_string())?;
    let seq = v.encode_system(&sys).map_err(|e| e.to_string())?;
    let words = v.render(seq.body()).join(" ");
    let expected = "add - x_1 mul + N0001 E-1 x_0 | add x_0 mul + N0001 E-1 x_1";
    ensure!(words == expected, "system encodes as {words:?}");
    ensure!(v.decode_system::<f64>(&seq).ok() == Some(sys), "system does not decode back");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let mag = 10f64.powf(rng.random_range(-8.0..8.0));
        let x = if rng.random::<bool>() { -mag } else { mag };
        let back = v.decode_float(&v.encode_float(x).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        worst = worst.max(((back - x) / x).abs());
    }
    ensure!(worst <= 5e-4, "float round trip error {worst:.3e}");
    Ok(format!("token lists exact, worst float error {worst:.2e}"))
}

type M2 = [[f64; 2]; 2];

fn mat_mul(a: &M2, b: &M2) -> M2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// `exp(A t)` by scaling and squaring a 30-term Taylor series.
fn expm(a: &M2, t: f64) -> M2 {
    let norm = a.iter().flatten().map(|v| (v * t).abs()).sum::<f64>();
    let s = (norm.max(1.0).log2().ceil() as i32 + 1).max(0);
    let h = t / 2f64.powi(s);
    let b = [[a[0][0] * h, a[0][1] * h], [a[1][0] * h, a[1][1] * h]];
    let mut term = [[1.0, 0.0], [0.0, 1.0]];
    let mut sum = term;
    for n in 1..30 {
        term = mat_mul(&term, &b);
        term.iter_mut().flatten().for_each(|v| *v /= n as f64);
        for i in 0..2 {
            for j in 0..2 {
                sum[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..s {
        sum = mat_mul(&sum, &sum);
    }
    sum
}

fn linear_system(a: &M2) -> OdeSystem<f64> {
    let row = |r: &[f64; 2]| {
        Expression::binary(
            BinaryOp::Add,
            Expression::binary(BinaryOp::Mul, Expression::Const(r[0]), Expression::Var(0)),
            Expression::binary(BinaryOp::Mul, Expression::Const(r[1]), Expression::Var(1)),
        )
    };
    OdeSystem::new(vec![row(&a[0]), row(&a[1])]).unwrap()
}

fn integrator() -> Result<String, String> {
    let cfg = IvpConfig::default();
    let tau = std::f64::consts::TAU;
    let osc = linear_system(&[[0.0, 1.0], [-1.0, 0.0]]);
    let traj = solve_ivp(&osc, &[1.0, 0.0], &[0.0, tau], &cfg).map_err(|e| e.to_string())?;
    let end = traj.state(1);
    let end_err = ((end[0] - 1.0).powi(2) + end[1].powi(2)).sqrt();
    ensure!(end_err <= 1e-3, "oscillator end-point error {end_err:.3e}");

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let grid = uniform_grid(0.0, 10.0, 101);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut a: M2 = [[0.0; 2]; 2];
        a.iter_mut().flatten().for_each(|v| *v = rng.random_range(-2.0..2.0));
        let tr = a[0][0] + a[1][1];
        let disc = tr * tr / 4.0 - (a[0][0] * a[1][1] - a[0][1] * a[1][0]);
        let max_re = tr / 2.0 + if disc > 0.0 { disc.sqrt() } else { 0.0 };
        let shift = max_re + rng.random_range(0.05..1.0);
        a[0][0] -= shift;
        a[1][1] -= shift;
        let x0 = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let traj = solve_ivp(&linear_system(&a), &x0, &grid, &cfg).map_err(|e| e.to_string())?;
        for (i, &t) in grid.iter().enumerate() {
            let e = expm(&a, t);
            let exact = [e[0][0] * x0[0] + e[0][1] * x0[1], e[1][0] * x0[0] + e[1][1] * x0[1]];
            let scale = exact.iter().chain(&x0).map(|v| v.abs()).fold(0.0, f64::max);
            for k in 0..2 {
                worst = worst.max((traj.state(i)[k] - exact[k]).abs() / (cfg.rtol * scale));
            }
        }
    }
    ensure!(worst <= 10.0, "linear-system error reached {worst:.2} rtol");
    Ok(format!("end-point error {end_err:.2e}, linear systems within {worst:.2} rtol"))
}

fn divergence() -> Result<String, String> {
    let cfg = GenConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let sys = sample_system(&cfg, 1000 + seed).map_err(|e| e.to_string())?;
        let mut points = 0;
        let mut tries = 0;
        while points < 10 {
            tries += 1;
            ensure!(tries < 10_000, "no finite points for {sys}");
            let x: Vec<f64> = (0..sys.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let sym = ddot_core::metrics::divergence_at(&sys, &x);
            let mut fd = 0.0;
            let mut scale = 0.0;
            for (k, f) in sys.equations().iter().enumerate() {
                let central = |h: f64| {
                    let mut p = x.clone();
                    p[k] = x[k] + h;
                    let up = f.evaluate(&p);
                    p[k] = x[k] - h;
                    (up - f.evaluate(&p)) / (2.0 * h)
                };
                let h = 1e-3 * x[k].abs().max(1.0);
                let d = (4.0 * central(h / 2.0) - central(h)) / 3.0;
                fd += d;
                scale += d.abs();
            }
            let tame = sys.eval(&x).iter().all(|v| v.is_finite() && v.abs() < 1e8);
            if !(sym.is_finite() && fd.is_finite() && tame) {
                continue;
            }
            worst = worst.max((sym - fd).abs() / scale.max(sym.abs()).max(1.0));
            points += 1;
        }
    }
    ensure!(worst <= 1e-4, "finite-difference disagreement {worst:.3e}");
    let truth: OdeSystem<f64> = parse_infix_system("-x_1 | x_0").unwrap();
    let pred: OdeSystem<f64> = parse_infix_system("-x_1 + 0.1 * x_0 | x_0 + 0.1 * x_1").unwrap();
    for (lo, hi, g) in [(-1.0, 1.0, 5), (-50.0, 3.0, 20), (0.0, 1e-3, 2)] {
        let region = Region::uniform(2, lo, hi, g).map_err(|e| e.to_string())?;
        let ft = divergence_field(&truth, &region).map_err(|e| e.to_string())?;
        let fp = divergence_field(&pred, &region).map_err(|e| e.to_string())?;
        ensure!(ft.values.iter().all(|v| *v == Some(0.0)), "truth divergence not zero");
        ensure!(
            fp.values.iter().all(|v| v.is_some_and(|v| (v - 0.2).abs() < 1e-12)),
            "predicted divergence not 0.2"
        );
        let d = div_diff(&truth, &pred, &region).map_err(|e| e.to_string())?;
        ensure!((d - 1.2f64.ln()).abs() <= 1e-9, "DIV-diff {d} on [{lo}, {hi}]");
    }
    Ok(format!("worst relative error {worst:.2e}, rotation pair gives ln 1.2"))
}

fn line(values: &[f64]) -> Trajectory<f64> {
    Trajectory::new((0..values.len()).map(|i| i as f64).collect(), values.to_vec(), 1).unwrap()
}

fn metric_semantics() -> Result<String, String> {
    let truth = line(&[0.0, 1.0, 2.0, 3.0]);
    let r2 = |p: &Trajectory<f64>| r_squared(&truth, p).map_err(|e| e.to_string());
    ensure!(r2(&truth)? == 1.0, "R2(truth, truth) != 1");
    ensure!(r2(&line(&[1.5; 4]))? == 0.0, "R2(truth, mean) != 0");
    // SSE 1, SST 5
    let hand = r2(&line(&[0.0, 1.0, 2.0, 4.0]))?;
    ensure!(hand == 0.8, "hand example gives {hand}");

    let bench = Benchmark::bundled();
    let mut pairs = 0;
    for a in &bench.entries {
        let region = TruthContext::new(a).map_err(|e| e.to_string())?.region.map_err(|e| e.to_string())?;
        let sa = a.system().map_err(|e| e.to_string())?;
        for b in bench.entries.iter().filter(|b| b.dim == a.dim) {
            let sb = b.system().map_err(|e| e.to_string())?;
            let ab = div_diff(&sa, &sb, &region).map_err(|e| e.to_string())?;
            let ba = div_diff(&sb, &sa, &region).map_err(|e| e.to_string())?;
            ensure!(ab.to_bits() == ba.to_bits(), "asymmetric on {} / {}", a.id, b.id);
            pairs += 1;
        }
    }
    let preds = PredictionsFile {
        version: PREDICTIONS_VERSION,
        method: "linear".into(),
        predictions: bench
            .entries
            .iter()
            .map(|e| (e.id.clone(), PredictionText::Single(vec!["mul -0.3 x_0"; e.dim].join(" | "))))
            .collect(),
    };
    let report = run_suite(&preds, &bench, &DEFAULT_NOISE_LEVELS, 3).map_err(|e| e.to_string())?;
    for e in &bench.entries {
        let divs: Vec<Option<u64>> = report
            .records
            .iter()
            .filter(|r| r.entry_id == e.id)
            .map(|r| r.div_diff.map(f64::to_bits))
            .collect();
        ensure!(divs.len() == DEFAULT_NOISE_LEVELS.len(), "{}: {} records", e.id, divs.len());
        ensure!(divs.iter().all(|d| *d == divs[0]), "{}: DIV-diff varies with noise", e.id);
    }
    Ok(format!("R2 exact, {pairs} symmetric pairs, DIV-diff identical across {} noise levels", DEFAULT_NOISE_LEVELS.len()))
}

fn tiny_config() -> ModelConfig {
    ModelConfig {
        width: 16,
        heads: 2,
        enc_layers: 1,
        dec_layers: 1,
        ffn_mult: 2,
        max_input_steps: 32,
        max_ode_len: 48,
        max_der_len: 64,
        ..ModelConfig::toy()
    }
}

/// The first `count` accepted restricted-family samples from seeds `base..`.
fn restricted_examples(cfg: &ModelConfig, gen: &GenConfig, count: usize, der_steps: usize, base: u64) -> Vec<Example> {
    let vocab = Vocabulary::new(cfg.vocab);
    let mut out = Vec::new();
    let mut seed = base;
    while out.len() < count {
        if let Ok(s) = build_sample(gen, seed) {
            if let Ok(ex) = Example::new(&s.system, &s.noisy, &s.derivatives, der_steps, &vocab, cfg) {
                out.push(ex);
            }
        }
        seed += 1;
    }
    out
}

fn gradient_check() -> Result<String, String> {
    let cfg = tiny_config();
    let gen = GenConfig {
        n_points: 6,
        min_points: 6,
        ..GenConfig::restricted_family()
    };
    let model = Model::<f64>::new(cfg.clone(), 7).map_err(|e| e.to_string())?;
    let batch = restricted_examples(&cfg, &gen, 2, 3, 100);
    let gc = GradCheckConfig::default();
    let report = grad_check(&model, &batch, &gc, None).map_err(|e| e.to_string())?;
    let n = report.entries.len();
    ensure!(n >= 200, "only {n} parameters sampled");
    for head in ["ode.", "der."] {
        ensure!(report.entries.iter().any(|e| e.tensor.starts_with(head)), "no samples from {head}");
    }
    let worst = report.max_rel_error();
    ensure!(worst <= 1e-4, "max relative error {worst:.3e}");
    let target = "ode.layer0.ffn.fc1.w";
    let corrupt = |g: &mut Params<f64>| g.get_mut(target).unwrap().iter_mut().for_each(|v| *v *= 2.0);
    let bad = grad_check(&model, &batch, &gc, Some(&corrupt)).map_err(|e| e.to_string())?;
    let caught = bad.max_rel_error_in(target);
    ensure!(caught >= 0.5, "corrupted gradient shows only {caught:.3e}");
    Ok(format!("{n} parameters, max relative error {worst:.2e}; corruption shows {caught:.2}"))
}

fn schedule() -> Result<String, String> {
    let cfg = TrainConfig::full();
    let (w, c) = (cfg.warmup_steps, cfg.decay_steps);
    let at = |s| lr_schedule(s, &cfg);
    ensure!(at(0) == 1e-7, "lr(0) = {}", at(0));
    ensure!(at(w) == 2e-4, "lr(W) = {}", at(w));
    ensure!(at(w + c) == cfg.floor_lr, "lr(W + C) = {}", at(w + c));
    let mid = at(w + c / 2);
    let expected = (cfg.peak_lr + cfg.floor_lr) / 2.0;
    ensure!((mid - expected).abs() <= 1e-9, "midpoint {mid}");
    Ok(format!("W = {w}, C = {c}, midpoint off by {:.1e}", (mid - expected).abs()))
}

fn overfit() -> Result<String, String> {
    let cfg = ModelConfig::toy();
    let tc = TrainConfig::toy();
    let data = restricted_examples(&cfg, &GenConfig::restricted_family(), 32, tc.der_steps, 0);
    let mut tr = Trainer::new(Model::<f32>::new(cfg, 0).map_err(|e| e.to_string())?, tc).map_err(|e| e.to_string())?;
    let mut last = String::new();
    while tr.step < 5_000 {
        tr.run(&data, 25, |_| true).map_err(|e| e.to_string())?;
        let full = tr.model.batch_loss(&data, 1.0, 1.0).map_err(|e| e.to_string())?;
        let (rec, der) = (full.rec.unwrap().accuracy(), full.der.unwrap().accuracy());
        last = format!("step {}: accuracy {rec:.3} / {der:.3}", tr.step);
        if rec < 0.95 || der < 0.95 {
            continue;
        }
        let mut exact = 0;
        for ex in &data {
            let h = decode(&tr.model, &ex.grid, DecodeMode::Greedy, None).map_err(|e| e.to_string())?;
            exact += usize::from(h[0].tokens == ex.ode[1..]);
        }
        last = format!("{last}, greedy exact {exact}/32");
        if exact >= 25 {
            return Ok(last);
        }
    }
    Err(last)
}

const DESK_STEPS: u64 = 2_000;
const DESK_SAMPLES: usize = 50_000;

fn held_out(gen: &GenConfig, count: usize) -> Benchmark {
    let mut entries = Vec::new();
    let mut seed = 10_000_000u64;
    while entries.len() < count {
        if let Ok(s) = build_sample(gen, seed) {
            entries.push(BenchmarkEntry {
                id: format!("s{seed}"),
                description: String::new(),
                dim: s.system.dim(),
                equations: s.system.equations().iter().map(|e| e.prefix_string()).collect(),
                initial_conditions: vec![s.clean.state(0).to_vec()],
                t_span: (0.0, gen.t_end),
                samples: gen.n_points,
            });
        }
        seed += 1;
    }
    Benchmark {
        version: 1,
        name: "held-out".into(),
        entries,
    }
}

fn desk_scale() -> Result<String, String> {
    let gen = GenConfig::restricted_family();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("train.jsonl");
    generate_dataset(&gen, DESK_SAMPLES * 11 / 10, 0, 1, &path).map_err(|e| e.to_string())?;
    let records = read_dataset(&path).map_err(|e| e.to_string())?;
    ensure!(records.len() >= DESK_SAMPLES, "only {} samples accepted", records.len());
    let mcfg = ModelConfig::toy();
    let base = TrainConfig {
        decay_steps: DESK_STEPS - TrainConfig::toy().warmup_steps,
        total_steps: DESK_STEPS,
        ..TrainConfig::toy()
    };
    let vocab = Vocabulary::new(mcfg.vocab);
    let data: Vec<Example> = records[..DESK_SAMPLES]
        .iter()
        .filter_map(|r| Example::from_record(r, base.der_steps, &vocab, &mcfg).ok())
        .collect();
    let bench = held_out(&gen, 50);
    let mut scores = Vec::new();
    for lambda_der in [1.0, 0.0] {
        let tc = TrainConfig { lambda_der, ..base.clone() };
        let model = Model::<f32>::new(mcfg.clone(), tc.seed).map_err(|e| e.to_string())?;
        let mut tr = Trainer::new(model, tc).map_err(|e| e.to_string())?;
        tr.run(&data, DESK_STEPS, |_| true).map_err(|e| e.to_string())?;
        let predictor = ModelPredictor::new(tr.model, DecodeOptions::default());
        let report = run_suite(&predictor, &bench, &[0.0], 0).map_err(|e| e.to_string())?;
        scores.push(report.aggregates[0].clone());
    }
    let (one, zero) = (&scores[0], &scores[1]);
    let fmt = |d: Option<f64>| d.map_or("none".into(), |d| format!("{d:.4}"));
    let detail = format!(
        "{} usable samples, {DESK_STEPS} steps; lambda_der 1: P {:.2}, DIV-diff {} over {}; lambda_der 0: P {:.2}, DIV-diff {} over {}",
        data.len(),
        one.p_r2_reconstruction,
        fmt(one.mean_div_diff),
        one.div_scored,
        zero.p_r2_reconstruction,
        fmt(zero.mean_div_diff),
        zero.div_scored
    );
    ensure!(one.p_r2_reconstruction >= 0.3, "{detail}");
    match (one.mean_div_diff, zero.mean_div_diff) {
        (Some(a), Some(b)) if a <= b => Ok(detail),
        _ => Err(detail),
    }
}

fn declared() -> Result<String, String> {
    Ok("declared non-reproducible: the full-scale table numbers need a 600k-step run and the complete \
        benchmark; criteria 7 and 8 plus the oracle suites stand in"
        .into())
}

fn ddot(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ddot"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "ddot {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(())
}

/// Every file under `dir` with its bytes, sorted by relative path.
fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

fn determinism() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
    for (run, workers) in [("a", "1"), ("b", "8")] {
        for stage in ["gen", "train"] {
            std::fs::create_dir_all(p(&format!("{run}/{stage}"))).map_err(|e| e.to_string())?;
        }
        ddot(&[
            "gen", "--preset", "restricted", "--count", "600", "--seed", "5", "--workers", workers, "--out",
            &p(&format!("{run}/gen/data.jsonl")),
        ])?;
        ddot(&[
            "train", "--data", &p("a/gen/data.jsonl"), "--steps", "20", "--seed", "3", "--out",
            &p(&format!("{run}/train/ck.json")),
        ])?;
        ddot(&[
            "eval", "--checkpoint", &p("a/train/ck.json"), "--noise-levels", "0,0.03", "--seed", "9", "--beam",
            "2", "--workers", workers, "--out", &p(&format!("{run}/eval")),
        ])?;
    }
    let mut files = 0;
    for stage in ["gen", "train", "eval"] {
        let a = tree(&tmp.path().join("a").join(stage));
        let b = tree(&tmp.path().join("b").join(stage));
        ensure!(!a.is_empty(), "{stage} wrote nothing");
        ensure!(
            a.iter().map(|f| &f.0).eq(b.iter().map(|f| &f.0)),
            "{stage}: different file sets"
        );
        for (x, y) in a.iter().zip(&b) {
            ensure!(x.1 == y.1, "{stage}: {} differs", x.0);
        }
        files += a.len();
    }
    Ok(format!("{files} files byte-identical across runs (workers 1 vs 8 for gen and eval)"))
}
