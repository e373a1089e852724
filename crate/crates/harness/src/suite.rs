use rayon::prelude::*;

use ddot_core::odegen::apply_noise;

use crate::benchmark::Benchmark;
use crate::evaluate::{evaluate_divergence, evaluate_generalization, evaluate_reconstruction, EvalError, TruthContext};
use crate::predict::{Prediction, Predictor};
use crate::report::{aggregate, EvalRecord, EvalReport, Failure, REPORT_VERSION};

pub const DEFAULT_NOISE_LEVELS: [f64; 6] = [0.0, 0.01, 0.02, 0.03, 0.04, 0.05];

/// Noise seed for (entry, level), mixed from the master seed.
pub fn noise_seed(master: u64, level: usize, entry: usize) -> u64 {
    // splitmix64 finalizer over a unique combination
    let mut z = master ^ ((level as u64) << 40) ^ (entry as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn score_prediction(
    prediction: Prediction,
    entry: &crate::BenchmarkEntry,
    ctx: &TruthContext,
    noise: f64,
) -> EvalRecord {
    let mut rec = EvalRecord {
        entry_id: entry.id.clone(),
        noise,
        predicted: None,
        r2_reconstruction: f64::NEG_INFINITY,
        r2_generalization: entry.generalization_ic().map(|_| f64::NEG_INFINITY),
        div_diff: None,
        failures: Vec::new(),
    };
    if entry.generalization_ic().is_none() {
        rec.failures.push(Failure::GeneralizationSkipped);
    }
    let sys = match prediction {
        Prediction::System(s) => s,
        Prediction::Missing => {
            rec.failures.push(Failure::MissingPrediction);
            return rec;
        }
        Prediction::Invalid(msg) => {
            rec.failures.push(Failure::InvalidPrediction(msg));
            return rec;
        }
    };
    rec.predicted = Some(sys.prefix_string());
    if sys.dim() != entry.dim {
        rec.failures.push(Failure::DimensionMismatch);
        return rec;
    }
    match evaluate_reconstruction(&sys, entry, ctx) {
        Ok(r2) => {
            if r2 == f64::NEG_INFINITY {
                rec.failures.push(Failure::ReconstructionDiverged);
            }
            rec.r2_reconstruction = r2;
        }
        Err(e) => rec.failures.push(Failure::InvalidPrediction(e.to_string())),
    }
    match evaluate_generalization(&sys, entry, ctx) {
        Ok(Some(r2)) => {
            if r2 == f64::NEG_INFINITY {
                rec.failures.push(Failure::GeneralizationDiverged);
            }
            rec.r2_generalization = Some(r2);
        }
        Ok(None) => {}
        Err(e) => rec.failures.push(Failure::InvalidPrediction(e.to_string())),
    }
    match evaluate_divergence(&sys, entry, ctx) {
        Ok(d) => rec.div_diff = Some(d),
        Err(e) => rec.failures.push(Failure::Divergence(e.to_string())),
    }
    rec.failures.sort();
    rec
}

/// Scores `predictor` on every entry at every noise level. The model input
/// at level `s` is the clean reconstruction trajectory under multiplicative
/// Gaussian noise of scale `s`; scores always compare against clean truth.
pub fn run_suite(
    predictor: &dyn Predictor,
    bench: &Benchmark,
    noise_levels: &[f64],
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let contexts: Vec<TruthContext> = bench
        .entries
        .par_iter()
        .map(TruthContext::new)
        .collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, usize)> = (0..noise_levels.len())
        .flat_map(|l| (0..bench.entries.len()).map(move |e| (l, e)))
        .collect();
    let records: Vec<EvalRecord> = jobs
        .par_iter()
        .map(|&(l, e)| {
            let entry = &bench.entries[e];
            let ctx = &contexts[e];
            let sigma = noise_levels[l];
            let observed = apply_noise(&ctx.reconstruction, sigma, noise_seed(seed, l, e));
            let prediction = predictor.predict(entry, sigma, &observed);
            score_prediction(prediction, entry, ctx, sigma)
        })
        .collect();
    let aggregates = noise_levels
        .iter()
        .map(|&n| {
            let at: Vec<&EvalRecord> = records.iter().filter(|r| r.noise == n).collect();
            aggregate(n, &at)
        })
        .collect();
    Ok(EvalReport {
        version: REPORT_VERSION,
        method: predictor.method().to_string(),
        benchmark: bench.name.clone(),
        benchmark_hash: bench.hash(),
        seed,
        noise_levels: noise_levels.to_vec(),
        records,
        aggregates,
    })
}
