use std::path::PathBuf;

use cgp_core::io::Transform;
use cgp_core::select::{ErrForm, GridSpec, LambdaGrid, SweepOptions};
use cgp_core::solver::RidgePolicy;
use cgp_core::{SelectionRule, SolverOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Sparse structure learning for causal graph processes.
///
/// Set CGP_THREADS to cap the number of worker threads.
#[derive(Debug, Parser)]
#[command(name = "cgp", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Draw a CGP-SBM instance and write its series, adjacency and polynomial.
    Simulate(SimulateArgs),
    /// Fit at a fixed lambda1.
    Fit(FitArgs),
    /// Sweep a lambda1 grid, pick the peak and refit.
    Select(SelectArgs),
    /// Recovery metrics over simulated seeds.
    Benchmark(BenchmarkArgs),
    /// Track sparsity over rolling windows of a price or return series.
    Rolling(RollingArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Fit(_) => "fit",
            Command::Select(_) => "select",
            Command::Benchmark(_) => "benchmark",
            Command::Rolling(_) => "rolling",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformArg {
    None,
    LogReturn,
}

impl From<TransformArg> for Transform {
    fn from(t: TransformArg) -> Self {
        match t {
            TransformArg::None => Transform::None,
            TransformArg::LogReturn => Transform::LogReturn,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleArg {
    ErrPair,
    ErrPairPlusBic,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrFormArg {
    FullPrediction,
    PerEdge,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Directory for result files; created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SbmArgs {
    /// Number of nodes.
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub clusters: usize,
    /// Lags of the generating process.
    #[arg(long)]
    pub lags: usize,
    /// Samples kept after burn-in.
    #[arg(long)]
    pub k: usize,
    /// Expected edge density of A.
    #[arg(long, default_value_t = cgp_core::sbm::DEFAULT_DENSITY)]
    pub density: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sbm: SbmArgs,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Spectral radius the sampled filter is rescaled to.
    #[arg(long, default_value_t = 0.5)]
    pub spectral_radius: f64,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct InputArgs {
    /// CSV with a label row and one row per time step.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = TransformArg::None)]
    pub transform: TransformArg,
    /// Lags to fit.
    #[arg(long)]
    pub lags: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    /// Stop when the L1 change of R falls below this.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    pub lambda1_c: f64,
    #[arg(long, default_value_t = 1e3)]
    pub lambda2_c: f64,
    /// Fixed ridge on the lag Gram matrices; escalates from zero on failure when omitted.
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Keep iterating when the in-sample MSE increases.
    #[arg(long)]
    pub no_mse_stop: bool,
}

impl SolverArgs {
    pub fn options(&self, lambda1: f64) -> SolverOptions {
        SolverOptions {
            lambda1,
            lambda1_c: self.lambda1_c,
            lambda2_c: self.lambda2_c,
            max_iterations: self.max_iter,
            epsilon: self.epsilon,
            ridge: self.ridge.map_or(RidgePolicy::Auto, RidgePolicy::Fixed),
            stop_on_mse_increase: !self.no_mse_stop,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GridArgs {
    /// Explicit comma-separated lambda1 grid.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub lambdas: Option<Vec<f64>>,
    /// Size of the automatic log-spaced grid.
    #[arg(long, default_value_t = 30)]
    pub grid_count: usize,
    /// Lowest automatic grid value as a fraction of lambda_max.
    #[arg(long, default_value_t = 0.01)]
    pub grid_low: f64,
    #[arg(long, value_enum, default_value_t = RuleArg::ErrPair)]
    pub rule: RuleArg,
    #[arg(long, value_enum, default_value_t = ErrFormArg::FullPrediction)]
    pub err_form: ErrFormArg,
    /// Trailing fraction of the series held out for out-of-sample MSE.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
}

impl GridArgs {
    pub fn grid(&self) -> cgp_core::Result<GridSpec> {
        Ok(match &self.lambdas {
            Some(v) => GridSpec::Explicit(LambdaGrid::new(v.clone())?),
            None => GridSpec::Auto {
                count: self.grid_count,
                low_fraction: self.grid_low,
            },
        })
    }

    pub fn rule(&self) -> SelectionRule {
        match self.rule {
            RuleArg::ErrPair => SelectionRule::ErrPair,
            RuleArg::ErrPairPlusBic => SelectionRule::ErrPairPlusBic,
        }
    }

    pub fn sweep(&self, solver: &SolverArgs) -> SweepOptions {
        SweepOptions {
            solver: solver.options(0.0),
            holdout_fraction: self.holdout,
            err_form: match self.err_form {
                ErrFormArg::FullPrediction => ErrForm::FullPrediction,
                ErrFormArg::PerEdge => ErrForm::PerEdge,
            },
            ..SweepOptions::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub lambda1: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Ground-truth adjacency triplet file; adds a recovery report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Also write the metric curves over the grid.
    #[arg(long)]
    pub emit_plot_data: bool,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub sbm: SbmArgs,
    /// Lags to fit; defaults to the generating lags.
    #[arg(long)]
    pub fit_lags: Option<usize>,
    /// First seed.
    #[arg(long)]
    pub seed: u64,
    /// Number of consecutive seeds.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct RollingArgs {
    /// CSV with a label row and one row per time step.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = TransformArg::LogReturn)]
    pub transform: TransformArg,
    #[arg(long)]
    pub lags: usize,
    /// Samples per window.
    #[arg(long, default_value_t = 1040)]
    pub window: usize,
    /// Samples between window starts.
    #[arg(long, default_value_t = 130)]
    pub step: usize,
    #[arg(long, default_value_t = 0.99)]
    pub rv_decay: f64,
    #[arg(long, default_value_t = 40)]
    pub rv_window: usize,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}
