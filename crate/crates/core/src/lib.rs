//! Structure learning for causal graph processes.
//!
//! A causal graph process is a vector autoregression whose lag matrices are
//! polynomials in a sparse directed adjacency matrix. This crate estimates the
//! adjacency matrix and polynomial coefficients by cyclical coordinate descent,
//! selects the LASSO weight automatically, and ships the simulation and
//! evaluation tooling needed to benchmark the estimator.

// `!(a <= b)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod io;
mod linalg;
pub mod model;
pub mod rolling;
pub mod sbm;
pub mod select;
pub mod solver;

pub use error::{CgpError, Result};
pub use eval::{recovery_report, run_benchmark, BenchEnv, PipelineOptions, RecoveryReport};
pub use io::{load_csv, LabeledSeries, Transform};
pub use linalg::spectral_radius;
pub use model::{
    graph_filter, predict, simulate, simulate_from, AdjacencyMatrix, LagCoefficients, NoiseSpec,
    PolyCoefficients, TimeSeries,
};
pub use rolling::{realized_variance, rolling_analysis, PriceOptions, RollingRow};
pub use sbm::{generate_instance, CgpInstance, SbmParams};
pub use select::{
    auto_fit, find_peak, select_lambda, sweep, AutoFit, ErrForm, GridSpec, LambdaGrid, Selection, SelectionCurve,
    SelectionRule, SweepOptions,
};
pub use solver::{compute_r, fit, fit_c, FitResult, SolverOptions, StopReason};
