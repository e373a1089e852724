//! Dual-decoder transformer: a trajectory encoder feeding one decoder for the
//! ODE token sequence and one for the derivative token sequence.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod decode;
pub mod element;
pub mod gradcheck;
pub mod network;
pub mod ops;
pub mod params;
pub mod train;

pub use checkpoint::{Checkpoint, CheckpointError, InputGrid};
pub use config::{lr_schedule, ModelConfig, TrainConfig};
pub use data::{DataError, Example};
pub use decode::{beam_search, decode, greedy, DecodeMode, Hypothesis};
pub use element::Element;
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use network::{BatchLoss, Decoder, HeadStats, Model, ModelError};
pub use params::{ParamSpec, Params};
pub use train::{batch_indices, LossRecord, StepReport, Trainer};

pub type ModelF64 = Model<f64>;
pub type ModelF32 = Model<f32>;
