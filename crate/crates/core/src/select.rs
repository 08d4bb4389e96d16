//! Model-selection curves over a `λ₁` grid and automatic choice of `λ₁`.
//!
//! Besides prediction MSE and AIC/BIC, two per-node metrics are tracked:
//! `err` normalizes each node's out-edge prediction error by its edge count,
//! `err_d` by its absolute out-degree. Both peak near the true sparsity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CgpError, Result};
use crate::model::{AdjacencyMatrix, LagCoefficients, TimeSeries};
use crate::solver::{self, residual_sum_of_squares, residual_sum_of_squares_after, FitResult, SolverOptions};

/// Strictly increasing, nonnegative `λ₁` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(CgpError::InvalidParameter("lambda grid is empty".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(CgpError::InvalidParameter("lambda grid values must be finite and >= 0".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CgpError::InvalidParameter("lambda grid must be strictly increasing".into()));
        }
        Ok(Self { values })
    }

    /// `count` logarithmically spaced values from `low` to `high` inclusive.
    pub fn log_spaced(low: f64, high: f64, count: usize) -> Result<Self> {
        if !(low > 0.0 && high > low) || count < 2 {
            return Err(CgpError::InvalidParameter(format!(
                "log grid needs 0 < low < high and count >= 2, got {low}..{high} x{count}"
            )));
        }
        let (a, b) = (low.ln(), high.ln());
        let step = (b - a) / (count - 1) as f64;
        let mut values: Vec<f64> = (0..count).map(|i| (a + step * i as f64).exp()).collect();
        values[0] = low;
        values[count - 1] = high;
        Self::new(values)
    }

    /// `start, start + step, ...` up to and including `stop` (within rounding).
    pub fn linear(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || stop < start {
            return Err(CgpError::InvalidParameter("linear grid needs step > 0 and stop >= start".into()));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        Self::new((0..count).map(|i| start + step * i as f64).collect())
    }

    /// Thirty log-spaced values from `0.01·λ_max` to `λ_max`.
    pub fn default_for(x: &TimeSeries, n_lags: usize) -> Result<Self> {
        let lmax = solver::lambda_max(x, n_lags)?;
        if lmax <= 0.0 {
            return Err(CgpError::InvalidParameter("lambda_max is zero: the series carries no signal".into()));
        }
        Self::log_spaced(0.01 * lmax, lmax, 30)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// How to resolve a grid for a particular series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GridSpec {
    /// `count` log-spaced values from `low_fraction·λ_max` to `λ_max`.
    Auto { count: usize, low_fraction: f64 },
    Explicit(LambdaGrid),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Auto {
            count: 30,
            low_fraction: 0.01,
        }
    }
}

impl GridSpec {
    pub fn resolve(&self, x: &TimeSeries, n_lags: usize) -> Result<LambdaGrid> {
        match self {
            GridSpec::Explicit(g) => Ok(g.clone()),
            GridSpec::Auto { count, low_fraction } => {
                let lmax = solver::lambda_max(x, n_lags)?;
                if lmax <= 0.0 {
                    return Err(CgpError::InvalidParameter("lambda_max is zero: the series carries no signal".into()));
                }
                LambdaGrid::log_spaced(low_fraction * lmax, lmax, *count)
            }
        }
    }
}

/// How the lag-1 prediction inside the `err` metrics is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrForm {
    /// `x(k)⊙mask_j − A·x(k−1)`: the full lag-1 prediction, compared against
    /// node `j`'s targets and against zero elsewhere.
    #[default]
    FullPrediction,
    /// `mask_j⊙(x(k) − A[:,j]·x_j(k−1))`: each edge `j → i` predicts `x_i` alone.
    PerEdge,
}

/// Per-node `(error sum / (K−M), edge count, absolute degree)` for nodes with edges.
fn per_node_errors(x: &TimeSeries, a: &AdjacencyMatrix, n_lags: usize, form: ErrForm) -> Vec<(f64, usize, f64)> {
    let targets = x.targets(n_lags);
    let lagged = x.lagged(n_lags, 1);
    let t = targets.ncols() as f64;
    let w = a.weights();
    let full = match form {
        ErrForm::FullPrediction => {
            let pred = w.dot(&lagged);
            let res: Vec<f64> = (&targets - &pred)
                .rows()
                .into_iter()
                .map(|r| r.dot(&r))
                .collect();
            let energy: Vec<f64> = pred.rows().into_iter().map(|r| r.dot(&r)).collect();
            let total = energy.iter().sum::<f64>();
            Some((res, energy, total))
        }
        ErrForm::PerEdge => None,
    };
    let mut out = Vec::new();
    for j in 0..a.n_nodes() {
        let col = w.column(j);
        let xj = lagged.row(j);
        let mut sum = 0.0;
        let mut edges = 0;
        let mut degree = 0.0;
        let mut masked_energy = 0.0;
        for (i, &aij) in col.iter().enumerate() {
            if aij == 0.0 {
                continue;
            }
            edges += 1;
            degree += aij.abs();
            match &full {
                Some((res, energy, _)) => {
                    sum += res[i];
                    masked_energy += energy[i];
                }
                None => {
                    sum += targets
                        .row(i)
                        .iter()
                        .zip(xj.iter())
                        .map(|(xi, xjl)| {
                            let r = xi - aij * xjl;
                            r * r
                        })
                        .sum::<f64>()
                }
            }
        }
        if let Some((_, _, total)) = &full {
            sum += (total - masked_energy).max(0.0);
        }
        if edges > 0 {
            out.push((sum / t, edges, degree));
        }
    }
    out
}

fn check_dims(x: &TimeSeries, a: &AdjacencyMatrix, n_lags: usize) -> Result<()> {
    x.require_lags(n_lags)?;
    if a.n_nodes() != x.n_nodes() {
        return Err(CgpError::DimensionMismatch {
            context: "error metric",
            expected: format!("{} nodes", x.n_nodes()),
            found: format!("{} nodes", a.n_nodes()),
        });
    }
    Ok(())
}

/// Edge-count normalized error. `None` when `A` has no edges.
pub fn err_metric(x: &TimeSeries, a: &AdjacencyMatrix, n_lags: usize, form: ErrForm) -> Result<Option<f64>> {
    check_dims(x, a, n_lags)?;
    let nodes = per_node_errors(x, a, n_lags, form);
    Ok((!nodes.is_empty()).then(|| nodes.iter().map(|(e, n, _)| e / *n as f64).sum()))
}

/// Absolute-degree normalized error. `None` when `A` has no edges.
pub fn err_degree_metric(
    x: &TimeSeries,
    a: &AdjacencyMatrix,
    n_lags: usize,
    form: ErrForm,
) -> Result<Option<f64>> {
    check_dims(x, a, n_lags)?;
    let nodes = per_node_errors(x, a, n_lags, form);
    Ok((!nodes.is_empty()).then(|| nodes.iter().map(|(e, _, d)| e / d).sum()))
}

/// Gaussian-likelihood AIC and BIC with `p = edge_count(A)` and `n = N·(K−M)`.
/// `None` when the residual sum of squares is zero.
pub fn information_criteria(
    x: &TimeSeries,
    r: &LagCoefficients,
    a: &AdjacencyMatrix,
    n_lags: usize,
) -> Result<Option<(f64, f64)>> {
    check_dims(x, a, n_lags)?;
    if r.n_lags() != n_lags || r.n_nodes() != x.n_nodes() {
        return Err(CgpError::DimensionMismatch {
            context: "information criteria",
            expected: format!("{n_lags} lags"),
            found: format!("{} lags", r.n_lags()),
        });
    }
    let rss = residual_sum_of_squares(x, r)?;
    let n = (x.n_nodes() * (x.n_samples() - n_lags)) as f64;
    if !(rss > 0.0) {
        return Ok(None);
    }
    let p = a.edge_count() as f64;
    let fit = n * (rss / n).ln();
    Ok(Some((fit + 2.0 * p, fit + p * n.ln())))
}

/// One-step-ahead MSE over `test`, using the tail of `train` as history for
/// the first `M` test samples.
pub fn mse_out(train: &TimeSeries, test: &TimeSeries, r: &LagCoefficients) -> Result<f64> {
    let m = r.n_lags();
    if test.n_samples() <= m {
        return Err(CgpError::InsufficientData {
            samples: test.n_samples(),
            lags: m,
        });
    }
    if train.n_nodes() != test.n_nodes() || r.n_nodes() != test.n_nodes() {
        return Err(CgpError::DimensionMismatch {
            context: "out-of-sample mse",
            expected: format!("{} nodes", test.n_nodes()),
            found: format!("{} / {} nodes", train.n_nodes(), r.n_nodes()),
        });
    }
    let rss = residual_sum_of_squares_after(train, test, r)?;
    Ok(rss / (test.n_nodes() * test.n_samples()) as f64)
}

/// Which window the `err` metrics are evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ErrWindow {
    #[default]
    InSample,
    OutOfSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub solver: SolverOptions,
    /// Trailing fraction of the series held out for `mse_out`. Fits use the rest.
    pub holdout_fraction: f64,
    pub err_window: ErrWindow,
    pub err_form: ErrForm,
    /// Also fit the polynomial coefficients for each row.
    pub fit_poly: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            holdout_fraction: 0.2,
            err_window: ErrWindow::InSample,
            err_form: ErrForm::default(),
            fit_poly: false,
        }
    }
}

/// One row of a selection curve. Metrics are `None` where undefined.
#[derive(Debug, Clone)]
pub struct CurveRow {
    pub lambda1: f64,
    pub edge_count: Option<usize>,
    pub err: Option<f64>,
    pub err_d: Option<f64>,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    pub mse_in: Option<f64>,
    pub mse_out: Option<f64>,
    pub fit: Option<FitResult>,
    /// Solver failure for this row, if any.
    pub failure: Option<String>,
}

/// Metrics as a function of `λ₁`, sorted by `λ₁`.
#[derive(Debug, Clone)]
pub struct SelectionCurve {
    pub n_lags: usize,
    pub rows: Vec<CurveRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Err,
    ErrD,
    Aic,
    Bic,
    MseIn,
    MseOut,
}

impl SelectionCurve {
    pub fn lambdas(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.lambda1).collect()
    }

    pub fn metric(&self, metric: Metric) -> Vec<Option<f64>> {
        self.rows
            .iter()
            .map(|r| match metric {
                Metric::Err => r.err,
                Metric::ErrD => r.err_d,
                Metric::Aic => r.aic,
                Metric::Bic => r.bic,
                Metric::MseIn => r.mse_in,
                Metric::MseOut => r.mse_out,
            })
            .collect()
    }

    /// `λ₁` of the smallest defined value of `metric`, boundaries included.
    pub fn argmin(&self, metric: Metric) -> Option<f64> {
        self.lambdas()
            .into_iter()
            .zip(self.metric(metric))
            .filter_map(|(l, v)| v.map(|v| (l, v)))
            .fold(None, |best: Option<(f64, f64)>, (l, v)| match best {
                Some((_, bv)) if bv <= v => best,
                _ => Some((l, v)),
            })
            .map(|(l, _)| l)
    }

    pub fn row_at(&self, lambda1: f64) -> Option<&CurveRow> {
        self.rows.iter().find(|r| r.lambda1 == lambda1)
    }
}

fn evaluate_row(
    train: &TimeSeries,
    test: Option<&TimeSeries>,
    n_lags: usize,
    lambda1: f64,
    opts: &SweepOptions,
) -> Result<CurveRow> {
    let solver_opts = SolverOptions {
        lambda1,
        ..opts.solver.clone()
    };
    let fit = if opts.fit_poly {
        solver::fit(train, n_lags, &solver_opts)?
    } else {
        let stage = solver::compute_r(train, n_lags, &solver_opts)?;
        FitResult {
            lambda1,
            r: stage.r,
            a: stage.a,
            c: crate::model::PolyCoefficients::new(n_lags),
            n_sweeps: stage.n_sweeps,
            stop_reason: stage.stop_reason,
            objective_trace: stage.objective_trace,
            ridge: stage.ridge,
            dead_columns: stage.dead_columns,
        }
    };
    let err_series = match (opts.err_window, test) {
        (ErrWindow::OutOfSample, Some(t)) if t.n_samples() > n_lags => t,
        _ => train,
    };
    let err = err_metric(err_series, &fit.a, n_lags, opts.err_form)?;
    let err_d = err_degree_metric(err_series, &fit.a, n_lags, opts.err_form)?;
    let ic = information_criteria(train, &fit.r, &fit.a, n_lags)?;
    let mse_in = solver::in_sample_mse(train, &fit.r)?;
    let mse_out = test.map(|t| mse_out(train, t, &fit.r)).transpose()?;
    Ok(CurveRow {
        lambda1,
        edge_count: Some(fit.a.edge_count()),
        err,
        err_d,
        aic: ic.map(|v| v.0),
        bic: ic.map(|v| v.1),
        mse_in: Some(mse_in),
        mse_out,
        fit: Some(fit),
        failure: None,
    })
}

/// Splits `x` per `opts.holdout_fraction` into `(train, test)`.
pub fn split_for_sweep(x: &TimeSeries, opts: &SweepOptions) -> Result<(TimeSeries, Option<TimeSeries>)> {
    if opts.holdout_fraction <= 0.0 {
        return Ok((x.clone(), None));
    }
    let (train, test) = x.split_tail(opts.holdout_fraction)?;
    Ok((train, Some(test)))
}

/// Fits every `λ₁` of the grid on the training window and records all metrics.
/// Per-row solver failures become undefined rows.
pub fn sweep(x: &TimeSeries, n_lags: usize, grid: &LambdaGrid, opts: &SweepOptions) -> Result<SelectionCurve> {
    opts.solver.validate()?;
    let (train, test) = split_for_sweep(x, opts)?;
    train.require_lags(n_lags)?;
    let rows = grid
        .values()
        .par_iter()
        .map(|&lambda1| {
            evaluate_row(&train, test.as_ref(), n_lags, lambda1, opts).unwrap_or_else(|e| CurveRow {
                lambda1,
                edge_count: None,
                err: None,
                err_d: None,
                aic: None,
                bic: None,
                mse_in: None,
                mse_out: None,
                fit: None,
                failure: Some(e.to_string()),
            })
        })
        .collect();
    Ok(SelectionCurve { n_lags, rows })
}

/// `λ` of the global maximum of the 3-point moving average of the defined values,
/// provided it is not the first or last defined point.
pub fn find_peak(lambdas: &[f64], values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<(f64, f64)> = lambdas
        .iter()
        .zip(values)
        .filter_map(|(l, v)| v.filter(|v| v.is_finite()).map(|v| (*l, v)))
        .collect();
    let n = defined.len();
    if n < 3 {
        return None;
    }
    let smoothed: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            let win = &defined[lo..=hi];
            win.iter().map(|(_, v)| v).sum::<f64>() / win.len() as f64
        })
        .collect();
    let mut best = 0;
    for i in 1..n {
        if smoothed[i] > smoothed[best] {
            best = i;
        }
    }
    (best != 0 && best != n - 1).then(|| defined[best].0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Mean of the `err` and `err_d` peaks, or whichever one exists.
    #[default]
    ErrPair,
    /// Mean of the available `err` peak, `err_d` peak and BIC minimizer.
    ErrPairPlusBic,
}

/// Chosen `λ₁` and where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub lambda1: f64,
    pub rule: SelectionRule,
    pub err_peak: Option<f64>,
    pub err_d_peak: Option<f64>,
    pub bic_min: Option<f64>,
}

pub fn select_lambda(curve: &SelectionCurve, rule: SelectionRule) -> Result<Selection> {
    if curve.rows.is_empty() {
        return Err(CgpError::InvalidParameter("selection curve is empty".into()));
    }
    let lambdas = curve.lambdas();
    let err_peak = find_peak(&lambdas, &curve.metric(Metric::Err));
    let err_d_peak = find_peak(&lambdas, &curve.metric(Metric::ErrD));
    let bic_min = match rule {
        SelectionRule::ErrPair => None,
        SelectionRule::ErrPairPlusBic => curve.argmin(Metric::Bic),
    };
    let chosen: Vec<f64> = [err_peak, err_d_peak, bic_min].into_iter().flatten().collect();
    if chosen.is_empty() {
        return Err(CgpError::SelectionFailure(match rule {
            SelectionRule::ErrPair => "neither err nor err_d has an interior peak".into(),
            SelectionRule::ErrPairPlusBic => "no err/err_d peak and no defined BIC".into(),
        }));
    }
    Ok(Selection {
        lambda1: chosen.iter().sum::<f64>() / chosen.len() as f64,
        rule,
        err_peak,
        err_d_peak,
        bic_min,
    })
}

/// Sweep, selection and the refit at the selected `λ₁`.
#[derive(Debug, Clone)]
pub struct AutoFit {
    pub curve: SelectionCurve,
    pub selection: Selection,
    pub fit: FitResult,
}

/// Full automatic pipeline on the training window of `x`.
pub fn auto_fit(
    x: &TimeSeries,
    n_lags: usize,
    grid: &GridSpec,
    opts: &SweepOptions,
    rule: SelectionRule,
) -> Result<AutoFit> {
    let (train, _) = split_for_sweep(x, opts)?;
    let grid = grid.resolve(&train, n_lags)?;
    let curve = sweep(x, n_lags, &grid, opts)?;
    let selection = select_lambda(&curve, rule)?;
    let fit = refit(&train, n_lags, selection.lambda1, &opts.solver)?;
    Ok(AutoFit { curve, selection, fit })
}

/// Full fit (including polynomial coefficients) at a fixed `λ₁`.
pub fn refit(x: &TimeSeries, n_lags: usize, lambda1: f64, opts: &SolverOptions) -> Result<FitResult> {
    solver::fit(
        x,
        n_lags,
        &SolverOptions {
            lambda1,
            ..opts.clone()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_series(n: usize, k: usize, seed: u64) -> TimeSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TimeSeries::new(Array2::from_shape_fn((n, k), |_| rng.random_range(-1.0..1.0))).unwrap()
    }

    fn sparse_random(n: usize, seed: u64) -> AdjacencyMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AdjacencyMatrix::new(Array2::from_shape_fn((n, n), |_| {
            if rng.random::<f64>() < 0.4 {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            }
        }))
        .unwrap()
    }

    /// Direct summation over nodes, edges and time for both metric forms.
    fn naive_err(x: &TimeSeries, a: &AdjacencyMatrix, m: usize, form: ErrForm, by_degree: bool) -> Option<f64> {
        let (n, k) = (x.n_nodes(), x.n_samples());
        let v = x.values();
        let w = a.weights();
        let mut total = 0.0;
        let mut any = false;
        for j in 0..n {
            let edges: Vec<usize> = (0..n).filter(|i| w[[*i, j]] != 0.0).collect();
            if edges.is_empty() {
                continue;
            }
            any = true;
            let mut sum = 0.0;
            for t in m..k {
                for i in 0..n {
                    let on = edges.contains(&i);
                    let target = if on { v[[i, t]] } else { 0.0 };
                    let pred = match form {
                        ErrForm::PerEdge => w[[i, j]] * v[[j, t - 1]],
                        ErrForm::FullPrediction => (0..n).map(|c| w[[i, c]] * v[[c, t - 1]]).sum(),
                    };
                    let r = target - pred;
                    if on || form == ErrForm::FullPrediction {
                        sum += r * r;
                    }
                }
            }
            let norm = if by_degree {
                edges.iter().map(|i| w[[*i, j]].abs()).sum()
            } else {
                edges.len() as f64
            };
            total += sum / (k - m) as f64 / norm;
        }
        any.then_some(total)
    }

    const FORMS: [ErrForm; 2] = [ErrForm::PerEdge, ErrForm::FullPrediction];

    #[test]
    fn single_exact_edge_has_zero_error() {
        let a_w = 0.7;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut v = Array2::zeros((2, 40));
        for k in 0..40 {
            v[[0, k]] = rng.random_range(-1.0..1.0);
            if k > 0 {
                v[[1, k]] = a_w * v[[0, k - 1]];
            }
        }
        let x = TimeSeries::new(v).unwrap();
        let a = AdjacencyMatrix::new(array![[0.0, 0.0], [a_w, 0.0]]).unwrap();
        for form in FORMS {
            assert!(err_metric(&x, &a, 1, form).unwrap().unwrap().abs() < 1e-28);
            assert!(err_degree_metric(&x, &a, 1, form).unwrap().unwrap().abs() < 1e-28);
        }
    }

    #[test]
    fn empty_adjacency_is_undefined() {
        let x = random_series(3, 20, 0);
        for form in FORMS {
            assert_eq!(err_metric(&x, &AdjacencyMatrix::zeros(3), 2, form).unwrap(), None);
            assert_eq!(err_degree_metric(&x, &AdjacencyMatrix::zeros(3), 2, form).unwrap(), None);
        }
    }

    #[test]
    fn metrics_match_direct_summation() {
        for seed in 0..4 {
            let x = random_series(5, 30, seed);
            let a = sparse_random(5, 50 + seed);
            for form in FORMS {
                for m in [1, 3] {
                    let e = err_metric(&x, &a, m, form).unwrap();
                    let d = err_degree_metric(&x, &a, m, form).unwrap();
                    let (ne, nd) = (naive_err(&x, &a, m, form, false), naive_err(&x, &a, m, form, true));
                    assert!((e.unwrap() - ne.unwrap()).abs() <= 1e-12 * ne.unwrap().max(1.0));
                    assert!((d.unwrap() - nd.unwrap()).abs() <= 1e-12 * nd.unwrap().max(1.0));
                }
            }
        }
    }

    #[test]
    fn per_edge_degree_scaling() {
        // scaling A by α multiplies the normalizer by α; the error is recomputed independently
        let x = random_series(4, 25, 9);
        let a = sparse_random(4, 10);
        let scaled = AdjacencyMatrix::new(a.weights() * 2.5).unwrap();
        let got = err_degree_metric(&x, &scaled, 1, ErrForm::PerEdge).unwrap().unwrap();
        let want = naive_err(&x, &scaled, 1, ErrForm::PerEdge, true).unwrap();
        assert!((got - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn metric_dimension_checks() {
        let x = random_series(3, 10, 0);
        assert!(err_metric(&x, &AdjacencyMatrix::zeros(2), 1, ErrForm::default()).is_err());
        assert!(err_metric(&x, &AdjacencyMatrix::zeros(3), 10, ErrForm::default()).is_err());
    }

    #[test]
    fn information_criteria_formulas() {
        let x = random_series(3, 30, 2);
        let r = LagCoefficients::zeros(3, 1);
        let a = AdjacencyMatrix::zeros(3);
        let (aic, bic) = information_criteria(&x, &r, &a, 1).unwrap().unwrap();
        let energy: f64 = x.targets(1).iter().map(|v| v * v).sum();
        let n = 3.0 * 29.0;
        assert!((aic - n * (energy / n).ln()).abs() < 1e-9);
        assert_eq!(aic, bic);

        let a = sparse_random(3, 4);
        let mut r = LagCoefficients::zeros(3, 1);
        *r.lag_mut(1) = a.weights().clone();
        let (aic, bic) = information_criteria(&x, &r, &a, 1).unwrap().unwrap();
        let rss = solver::residual_sum_of_squares(&x, &r).unwrap();
        let p = a.edge_count() as f64;
        assert!((aic - (n * (rss / n).ln() + 2.0 * p)).abs() < 1e-9);
        assert!((bic - (n * (rss / n).ln() + p * n.ln())).abs() < 1e-9);

        let silent = TimeSeries::new(Array2::zeros((3, 10))).unwrap();
        assert_eq!(information_criteria(&silent, &LagCoefficients::zeros(3, 1), &AdjacencyMatrix::zeros(3), 1).unwrap(), None);
    }

    #[test]
    fn out_of_sample_mse_cases() {
        let x = random_series(3, 40, 3);
        let (train, test) = x.split_tail(0.25).unwrap();
        let zero = LagCoefficients::zeros(3, 2);
        let energy = test.values().iter().map(|v| v * v).sum::<f64>() / (3.0 * 10.0);
        assert!((mse_out(&train, &test, &zero).unwrap() - energy).abs() < 1e-15);

        let mut r = LagCoefficients::zeros(3, 2);
        *r.lag_mut(1) = sparse_random(3, 5).weights().clone();
        *r.lag_mut(2) = sparse_random(3, 6).weights().clone();
        let v = x.values();
        let mut naive = 0.0;
        for k in 30..40 {
            for i in 0..3 {
                let mut pred = 0.0;
                for l in 1..=2 {
                    for j in 0..3 {
                        pred += r.lag(l)[[i, j]] * v[[j, k - l]];
                    }
                }
                naive += (v[[i, k]] - pred).powi(2);
            }
        }
        assert!((mse_out(&train, &test, &r).unwrap() - naive / 30.0).abs() < 1e-12);

        let mut exact = v.to_owned();
        for k in 2..40 {
            let next = r.lag(1).dot(&exact.column(k - 1)) + r.lag(2).dot(&exact.column(k - 2));
            exact.column_mut(k).assign(&next);
        }
        let (train, test) = TimeSeries::new(exact).unwrap().split_tail(0.25).unwrap();
        assert!(mse_out(&train, &test, &r).unwrap() < 1e-28);
        let short = TimeSeries::new(Array2::zeros((3, 2))).unwrap();
        assert!(mse_out(&train, &short, &r).is_err());
    }

    fn curve_from(lambdas: &[f64], err: &[Option<f64>], err_d: &[Option<f64>], bic: &[Option<f64>]) -> SelectionCurve {
        let rows = lambdas
            .iter()
            .enumerate()
            .map(|(i, &l)| CurveRow {
                lambda1: l,
                edge_count: Some(0),
                err: err[i],
                err_d: err_d[i],
                aic: None,
                bic: bic[i],
                mse_in: None,
                mse_out: None,
                fit: None,
                failure: None,
            })
            .collect();
        SelectionCurve { n_lags: 1, rows }
    }

    fn bump(lambdas: &[f64], at: f64) -> Vec<Option<f64>> {
        lambdas.iter().map(|l| Some(-(l - at).powi(2))).collect()
    }

    #[test]
    fn selection_rule_cases() {
        let l: Vec<f64> = (0..=20).map(|i| 10.0 * i as f64).collect();
        let none = vec![None; l.len()];
        let flat = vec![Some(1.0); l.len()];

        let c = curve_from(&l, &bump(&l, 40.0), &bump(&l, 60.0), &none);
        let s = select_lambda(&c, SelectionRule::ErrPair).unwrap();
        assert_eq!((s.err_peak, s.err_d_peak), (Some(40.0), Some(60.0)));
        assert_eq!(s.lambda1, 50.0);

        let c = curve_from(&l.iter().map(|v| v + 5.0).collect::<Vec<_>>(), &flat, &bump(&l, 80.0), &none);
        assert_eq!(select_lambda(&c, SelectionRule::ErrPair).unwrap().lambda1, 85.0);

        let c = curve_from(&l, &flat, &flat, &none);
        assert!(matches!(select_lambda(&c, SelectionRule::ErrPair), Err(CgpError::SelectionFailure(_))));

        let bic: Vec<Option<f64>> = bump(&l, 100.0).into_iter().map(|v| v.map(|v| -v)).collect();
        let c = curve_from(&l, &bump(&l, 40.0), &bump(&l, 60.0), &bic);
        let s = select_lambda(&c, SelectionRule::ErrPairPlusBic).unwrap();
        assert_eq!(s.bic_min, Some(100.0));
        assert!((s.lambda1 - 200.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_bump_peak_within_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let l: Vec<f64> = (0..40).map(|i| i as f64).collect();
        for trial in 0..20 {
            let center = 8.0 + trial as f64;
            let v: Vec<Option<f64>> = l
                .iter()
                .map(|x| Some(10.0 * (-(x - center).powi(2) / 50.0).exp() + rng.random_range(-0.3..0.3)))
                .collect();
            let p = find_peak(&l, &v).unwrap();
            assert!((p - center).abs() <= 1.0, "peak {p} vs {center}");
        }
    }

    #[test]
    fn sweep_rows_and_lambda_max_tail() {
        let x = random_series(4, 60, 8);
        let opts = SweepOptions::default();
        let (train, _) = split_for_sweep(&x, &opts).unwrap();
        let lmax = solver::lambda_max(&train, 1).unwrap();
        let grid = LambdaGrid::new(vec![0.1 * lmax, 0.5 * lmax, lmax, 2.0 * lmax]).unwrap();
        let curve = sweep(&x, 1, &grid, &opts).unwrap();
        assert_eq!(curve.rows.len(), 4);
        for row in &curve.rows[2..] {
            assert_eq!(row.edge_count, Some(0));
            assert_eq!((row.err, row.err_d), (None, None));
            assert!(row.mse_in.is_some() && row.mse_out.is_some());
        }
        let one = sweep(&x, 1, &LambdaGrid::new(vec![0.3 * lmax]).unwrap(), &opts).unwrap();
        assert_eq!(one.rows.len(), 1);
        assert_eq!(one.rows[0].lambda1, 0.3 * lmax);
    }

    #[test]
    fn argmin_includes_boundaries() {
        let l = [1.0, 2.0, 3.0];
        let c = curve_from(&l, &[Some(3.0), Some(2.0), Some(1.0)], &[None; 3], &[None; 3]);
        assert_eq!(c.argmin(Metric::Err), Some(3.0));
        assert_eq!(c.argmin(Metric::ErrD), None);
    }

    #[test]
    fn grid_validation() {
        assert!(LambdaGrid::new(vec![]).is_err());
        assert!(LambdaGrid::new(vec![1.0, 1.0]).is_err());
        assert!(LambdaGrid::new(vec![-1.0, 1.0]).is_err());
        let g = LambdaGrid::linear(30.0, 300.0, 5.0).unwrap();
        assert_eq!(g.len(), 55);
        assert_eq!(g.values()[54], 300.0);
        let g = LambdaGrid::log_spaced(0.1, 10.0, 3).unwrap();
        assert!((g.values()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_maximum_is_not_a_peak() {
        let l = [1.0, 2.0, 3.0, 4.0, 5.0];
        let v: Vec<_> = l.iter().map(|x| Some(*x)).collect();
        assert_eq!(find_peak(&l, &v), None);
    }

    #[test]
    fn unimodal_peak() {
        let l = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let v = [1.0, 2.0, 4.0, 6.0, 4.0, 2.0, 1.0].map(Some);
        assert_eq!(find_peak(&l, &v), Some(4.0));
    }

    #[test]
    fn too_few_defined_points() {
        let l = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(find_peak(&l, &[None, Some(1.0), Some(2.0), None]), None);
    }

    #[test]
    fn undefined_points_are_skipped() {
        let l = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let v = [Some(1.0), None, Some(5.0), Some(9.0), Some(5.0), Some(1.0)];
        assert_eq!(find_peak(&l, &v), Some(4.0));
    }
}
