//! Big-batch stochastic gradient methods.
//!
//! The batch grows whenever its estimated gradient noise outweighs the
//! gradient signal, which keeps the signal-to-noise ratio of every step
//! above a fixed threshold. With the noise under control, stepsizes can be
//! chosen the way deterministic methods choose them: fixed, by backtracking
//! line search, or by a curvature (Barzilai-Borwein) estimate.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` and `*32` aliases below name the common instantiations.
//!
//! ```
//! use bigbatch::{generate_quadratic, run, Method, OptimizerConfig64};
//!
//! let problem = generate_quadratic(5, 500, 1.0, 0.1, &[1.0; 5], 0).unwrap();
//! let cfg = OptimizerConfig64::for_method(Method::BbsArmijo);
//! let report = run(&problem, &cfg, 42).unwrap();
//! assert!(report.last().loss_full < report.records[0].loss_full);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batching;
pub mod harness;
pub mod optimizers;
pub mod problems;
pub mod scalar;
pub mod theory;

pub use batching::{
    draw_batch, draw_with_replacement, estimate_variance, extend_batch, grow_until_condition,
    BatchError, BatchState, Growth, GrowthPolicy,
};
pub use optimizers::{
    run, run_observed, ArmijoConfig, DecaySchedule, Method, OptError, OptimizerConfig,
    OptimizerState, RunReport, SfPolicy, StopReason, TraceRecord, Update,
};
pub use problems::{
    generate_quadratic, load_dataset, normalize_features, parse_dataset, write_dataset, DataFormat,
    Dataset, GradSample, LabelKind, Problem, ProblemError, ProblemKind,
};
pub use scalar::Scalar;

pub type Dataset64 = Dataset<f64>;
pub type Problem64 = Problem<f64>;
pub type BatchState64 = BatchState<f64>;
pub type GrowthPolicy64 = GrowthPolicy<f64>;
pub type OptimizerConfig64 = OptimizerConfig<f64>;
pub type OptimizerState64 = OptimizerState<f64>;
pub type RunReport64 = RunReport<f64>;

pub type Dataset32 = Dataset<f32>;
pub type Problem32 = Problem<f32>;
pub type BatchState32 = BatchState<f32>;
pub type GrowthPolicy32 = GrowthPolicy<f32>;
pub type OptimizerConfig32 = OptimizerConfig<f32>;
pub type OptimizerState32 = OptimizerState<f32>;
pub type RunReport32 = RunReport<f32>;
