//! Variance-reduced stochastic matrix factorization.
//!
//! A dictionary `W` is learned from samples `y_1..y_n` by minimizing
//! `(1/n) sum_i loss(y_i, W) + psi(W)` over a constraint set `C`, where each
//! loss is itself a small regularized coding problem in a coefficient vector
//! `h` and (for robust variants) an outlier vector `r`.
//!
//! The main entry point is [`solvers::run_vr`]; [`solvers::run_smm`],
//! [`solvers::run_sgd`] and [`solvers::run_batch_reference`] are baselines.

// NaN-rejecting checks are written as `!(x > 0.0)` throughout
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod error;
pub mod linalg;
pub mod objective;
pub mod problem;
pub mod prox;
pub mod solvers;
pub mod subprob;
pub mod types;

pub use config::{check_step_condition, default_sizing, FinalOption, SolverConfig};
pub use error::{Error, Result};
pub use problem::{make_spec, Formulation, ProblemSpec, SpecParams};
pub use types::{Dataset, DictionaryState, NullSink, TraceRecord, TraceSink};
