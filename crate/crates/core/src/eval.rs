//! Recovery metrics against ground truth, the multi-seed benchmark harness and
//! empirical timing.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CgpError, Result};
use crate::model::AdjacencyMatrix;
use crate::sbm::{generate_instance, SbmParams};
use crate::select::{auto_fit, GridSpec, SelectionRule, SweepOptions};
use crate::solver::{self, SolverOptions};

/// Support and weight agreement between an estimate and the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// `|edges(Â) − edges(A)|`.
    pub nbde: usize,
    /// `nbde / N² · 100`.
    pub nbde_pct: f64,
    /// Share of true edges that are also in `Â`, in percent.
    pub true_positive_pct: f64,
    /// Share of `Â`'s edges that are not in `A`, in percent (0 when `Â` is empty).
    pub false_positive_pct: f64,
    /// `‖Â − A‖_F² / N²`.
    pub adjacency_mse: f64,
    pub true_edges: usize,
    pub estimated_edges: usize,
    pub true_positive_count: usize,
    pub false_positive_count: usize,
}

pub fn recovery_report(a_true: &AdjacencyMatrix, a_hat: &AdjacencyMatrix) -> Result<RecoveryReport> {
    if a_true.n_nodes() != a_hat.n_nodes() {
        return Err(CgpError::DimensionMismatch {
            context: "recovery report",
            expected: format!("{} nodes", a_true.n_nodes()),
            found: format!("{} nodes", a_hat.n_nodes()),
        });
    }
    let n2 = (a_true.n_nodes() * a_true.n_nodes()) as f64;
    let mut tp = 0;
    let mut fp = 0;
    let mut sq = 0.0;
    for (t, h) in a_true.weights().iter().zip(a_hat.weights().iter()) {
        match (*t != 0.0, *h != 0.0) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            _ => {}
        }
        sq += (h - t) * (h - t);
    }
    let true_edges = a_true.edge_count();
    let estimated_edges = a_hat.edge_count();
    let nbde = true_edges.abs_diff(estimated_edges);
    let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
    Ok(RecoveryReport {
        nbde,
        nbde_pct: 100.0 * nbde as f64 / n2,
        true_positive_pct: pct(tp, true_edges),
        false_positive_pct: pct(fp, estimated_edges),
        adjacency_mse: sq / n2,
        true_edges,
        estimated_edges,
        true_positive_count: tp,
        false_positive_count: fp,
    })
}

/// A simulated benchmark environment `(N, Nc, M, K)`, optionally fitting a
/// different lag count than the one simulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchEnv {
    pub n_nodes: usize,
    pub n_clusters: usize,
    pub sim_lags: usize,
    pub fit_lags: usize,
    pub n_samples: usize,
    pub density: f64,
}

impl BenchEnv {
    pub fn new(n_nodes: usize, n_clusters: usize, n_lags: usize, n_samples: usize) -> Self {
        Self {
            n_nodes,
            n_clusters,
            sim_lags: n_lags,
            fit_lags: n_lags,
            n_samples,
            density: crate::sbm::DEFAULT_DENSITY,
        }
    }

    pub fn misspecified(self, fit_lags: usize) -> Self {
        Self { fit_lags, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub sweep: SweepOptions,
    pub grid: GridSpec,
    pub rule: SelectionRule,
}

/// Outcome for a single seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub true_density: Option<f64>,
    pub lambda1: Option<f64>,
    pub report: Option<RecoveryReport>,
    pub error: Option<String>,
}

/// Median and interquartile range of one statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: f64,
    pub iqr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub nbde: Spread,
    pub nbde_pct: Spread,
    pub true_positive_pct: Spread,
    pub false_positive_pct: Spread,
    pub adjacency_mse: Spread,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub env: BenchEnv,
    pub per_seed: Vec<SeedRecord>,
    pub summary: BenchmarkSummary,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn spread(values: &[f64]) -> Spread {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Spread {
        median: quantile(&v, 0.5),
        iqr: quantile(&v, 0.75) - quantile(&v, 0.25),
    }
}

pub fn median(values: &[f64]) -> f64 {
    spread(values).median
}

pub fn summarize(reports: &[RecoveryReport]) -> BenchmarkSummary {
    let take = |f: fn(&RecoveryReport) -> f64| spread(&reports.iter().map(f).collect::<Vec<_>>());
    BenchmarkSummary {
        nbde: take(|r| r.nbde as f64),
        nbde_pct: take(|r| r.nbde_pct),
        true_positive_pct: take(|r| r.true_positive_pct),
        false_positive_pct: take(|r| r.false_positive_pct),
        adjacency_mse: take(|r| r.adjacency_mse),
    }
}

fn run_seed(env: &BenchEnv, seed: u64, opts: &PipelineOptions) -> Result<(f64, f64, RecoveryReport)> {
    let params = SbmParams::with_density(env.n_nodes, env.n_clusters, env.density, seed)?;
    let instance = generate_instance(&params, env.sim_lags, env.n_samples)?;
    let fitted = auto_fit(&instance.x, env.fit_lags, &opts.grid, &opts.sweep, opts.rule)?;
    let report = recovery_report(&instance.a_true, &fitted.fit.a)?;
    Ok((instance.density(), fitted.selection.lambda1, report))
}

/// Runs the full pipeline on `seeds.len()` simulated instances and reports
/// per-seed metrics with medians and interquartile ranges over the successes.
pub fn run_benchmark(env: &BenchEnv, seeds: &[u64], opts: &PipelineOptions) -> Result<BenchmarkReport> {
    if seeds.is_empty() {
        return Err(CgpError::InvalidParameter("benchmark needs at least one seed".into()));
    }
    let mut per_seed: Vec<SeedRecord> = seeds
        .par_iter()
        .map(|&seed| match run_seed(env, seed, opts) {
            Ok((density, lambda1, report)) => SeedRecord {
                seed,
                true_density: Some(density),
                lambda1: Some(lambda1),
                report: Some(report),
                error: None,
            },
            Err(e) => SeedRecord {
                seed,
                true_density: None,
                lambda1: None,
                report: None,
                error: Some(format!("{}: {e}", e.category())),
            },
        })
        .collect();
    per_seed.sort_by_key(|r| r.seed);

    let reports: Vec<RecoveryReport> = per_seed.iter().filter_map(|r| r.report).collect();
    let failed = per_seed.len() - reports.len();
    if reports.is_empty() || 2 * failed >= per_seed.len() {
        return Err(CgpError::Benchmark {
            failed,
            total: per_seed.len(),
        });
    }
    Ok(BenchmarkReport {
        env: *env,
        summary: summarize(&reports),
        per_seed,
    })
}

/// Which dimension a timing profile varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleAxis {
    Nodes,
    Samples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingBase {
    pub n_nodes: usize,
    pub n_samples: usize,
    /// Clusters per node; the cluster count follows the node count.
    pub cluster_ratio: f64,
    pub n_lags: usize,
    /// `λ₁` as a fraction of each instance's `λ_max`.
    pub lambda_fraction: f64,
    pub solver: SolverOptions,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for TimingBase {
    fn default() -> Self {
        Self {
            n_nodes: 100,
            n_samples: 1040,
            cluster_ratio: 0.05,
            n_lags: 3,
            lambda_fraction: 0.1,
            solver: SolverOptions::default(),
            repeats: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub n_nodes: usize,
    pub n_samples: usize,
    /// Fastest of the repeats.
    pub seconds: f64,
    pub n_sweeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingProfile {
    pub axis: ScaleAxis,
    pub rows: Vec<TimingRow>,
    /// Least-squares slope of `ln(seconds)` on `ln(size)`; `None` for a single size.
    pub slope: Option<f64>,
}

impl TimingProfile {
    /// `seconds[i+1] / seconds[i]` for consecutive rows.
    pub fn ratios(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| w[1].seconds / w[0].seconds).collect()
    }
}

/// Measures [`solver::compute_r`] wall time as one dimension grows.
pub fn timing_profile(sizes: &[usize], axis: ScaleAxis, base: &TimingBase) -> Result<TimingProfile> {
    if sizes.is_empty() {
        return Err(CgpError::InvalidParameter("timing profile needs at least one size".into()));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let (n, k) = match axis {
            ScaleAxis::Nodes => (size, base.n_samples),
            ScaleAxis::Samples => (base.n_nodes, size),
        };
        let clusters = ((n as f64 * base.cluster_ratio).round() as usize).clamp(1, n);
        let params = SbmParams::with_density(n, clusters, crate::sbm::DEFAULT_DENSITY, base.seed)?;
        let instance = generate_instance(&params, base.n_lags, k)?;
        let lambda1 = base.lambda_fraction * solver::lambda_max(&instance.x, base.n_lags)?;
        let opts = SolverOptions {
            lambda1,
            ..base.solver.clone()
        };
        let mut best = f64::INFINITY;
        let mut sweeps = 0;
        for _ in 0..base.repeats.max(1) {
            let start = Instant::now();
            let fit = solver::compute_r(&instance.x, base.n_lags, &opts)?;
            best = best.min(start.elapsed().as_secs_f64());
            sweeps = fit.n_sweeps;
        }
        rows.push(TimingRow {
            n_nodes: n,
            n_samples: k,
            seconds: best,
            n_sweeps: sweeps,
        });
    }
    let slope = (rows.len() >= 2).then(|| {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| {
                let size = match axis {
                    ScaleAxis::Nodes => r.n_nodes,
                    ScaleAxis::Samples => r.n_samples,
                };
                ((size as f64).ln(), r.seconds.ln())
            })
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
        sxy / sxx
    });
    Ok(TimingProfile { axis, rows, slope })
}
