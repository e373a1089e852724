//! Symbolic ODE building blocks: expression trees, tokenization, random
//! system generation, Dormand–Prince integration and trajectory/divergence
//! metrics.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the bottom of this file name the common instantiations.

pub mod expr;
pub mod integrator;
pub mod metrics;
pub mod numtok;
pub mod odegen;
pub mod scalar;
pub mod trajectory;

pub use expr::{parse_infix, parse_infix_system, BinaryOp, ExprError, Expression, OdeSystem, Symbol, UnaryOp};
pub use integrator::{solve_ivp, FailureReason, IvpConfig, IvpError};
pub use metrics::{div_diff, divergence_at, divergence_field, r_squared, DivergenceField, MetricError, Region};
pub use numtok::{TokError, TokenId, TokenSequence, VocabConfig, Vocabulary};
pub use odegen::{DatasetRecord, DatasetSample, GenConfig};
pub use scalar::Scalar;
pub use trajectory::{uniform_grid, Trajectory, TrajectoryError};

pub type Expr = Expression<f64>;
pub type ExprF32 = Expression<f32>;
pub type System = OdeSystem<f64>;
pub type SystemF32 = OdeSystem<f32>;
pub type Traj = Trajectory<f64>;
pub type TrajF32 = Trajectory<f32>;
pub type RegionF64 = Region<f64>;
