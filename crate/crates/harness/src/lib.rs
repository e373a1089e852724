//! Benchmark evaluation (reconstruction, generalization, DIV-diff) across
//! noise levels, report emission and inference from CSV data.

pub mod benchmark;
pub mod evaluate;
pub mod infer;
pub mod predict;
pub mod report;
pub mod suite;

pub use benchmark::{load_benchmark, Benchmark, BenchmarkEntry, BenchmarkError};
pub use evaluate::{
    evaluate_divergence, evaluate_generalization, evaluate_reconstruction, parse_system_text, EvalError, TruthContext,
};
pub use infer::{infer_from_csv, InferError, InferOptions, InferResult};
pub use predict::{DecodeOptions, ModelPredictor, Prediction, PredictionsFile, Predictor};
pub use report::{emit_comparison, emit_report, render_tables, EvalRecord, EvalReport, Failure};
pub use suite::{run_suite, DEFAULT_NOISE_LEVELS};
