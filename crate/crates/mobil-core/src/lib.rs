//! Model-based online imitation learning: MoBIL-Prox and MoBIL-VI with
//! predictive gradient models, online-learning baselines, Mirror-Prox for
//! monotone variational inequalities and a linear-Gaussian imitation benchmark.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod geometry;
pub mod mobil;
pub mod online;
pub mod schedules;
pub mod vi;

/// Library version recorded next to every trace.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use env::{Benchmark, BenchmarkParams, LinearDynamics, LinearGaussianPolicy, RolloutBatch, TransitionStats};
pub use error::{MobilError, Result};
pub use experiment::{run_mobil, Algorithm, ExperimentConfig, RunOutput, TraceRecord, TRACE_COLUMNS, VI_COLUMNS};
pub use fit::{fit_rate, RateFit};
pub use geometry::{BregmanGenerator, FeasibleSet, Point};
pub use mobil::{GradientOracle, ModelKind, PredictiveModel, ProxState};
pub use online::{QuadraticLoss, RegretLedger};
pub use schedules::{AdaptiveStepConfig, ConvexityMode, EtaMode, StepState, WeightSchedule};
pub use vi::{MirrorProxConfig, MonotoneOperator, StepSchedule};
