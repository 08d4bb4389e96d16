//! Block/cyclical coordinate descent for the lag matrices, adjacency extraction
//! and the polynomial-coefficient fit.
//!
//! The R-stage keeps the full residual `E = X_M - Σ_l R_l X_{M-l}` up to date so a
//! column update of `R_1` costs `O(N·T)` and a matrix update of `R_i` costs
//! `O(N²·T + N³)`, where `T = K - M`. One sweep is therefore quadratic in `N`
//! and linear in `K`.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{CgpError, Result};
use crate::linalg;
use crate::model::{AdjacencyMatrix, LagCoefficients, PolyCoefficients, TimeSeries};

/// Largest allowed `‖(G + 2λ₂I)·inv − I‖_∞` for a cached inverse.
pub const GRAM_INVERSE_TOL: f64 = 1e-8;
const RIDGE_ESCALATION_STEPS: usize = 40;

/// `sign(a)·max(|a| − b, 0)`.
#[inline]
pub fn soft_threshold(a: f64, b: f64) -> f64 {
    if a > b {
        a - b
    } else if a < -b {
        a + b
    } else {
        0.0
    }
}

/// Elementwise [`soft_threshold`].
pub fn soft_threshold_vec(a: &Array1<f64>, b: f64) -> Array1<f64> {
    a.mapv(|v| soft_threshold(v, b))
}

/// How the Gram matrices of lags `i > 1` are regularized before inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RidgePolicy {
    /// Use no ridge unless the factorization fails, then escalate from
    /// `1e-10·tr(G)/N` by factors of ten.
    Auto,
    /// Always use this `λ₂`.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// LASSO weight on the columns of `R_1`.
    pub lambda1: f64,
    pub lambda1_c: f64,
    pub lambda2_c: f64,
    pub max_iterations: usize,
    pub epsilon: f64,
    pub ridge: RidgePolicy,
    /// Stop (and keep the previous iterate) once the in-sample MSE goes up.
    pub stop_on_mse_increase: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            lambda1: 0.0,
            lambda1_c: 0.05,
            lambda2_c: 1e3,
            max_iterations: 50,
            epsilon: 0.1,
            ridge: RidgePolicy::Auto,
            stop_on_mse_increase: true,
        }
    }
}

impl SolverOptions {
    pub fn with_lambda1(lambda1: f64) -> Self {
        Self {
            lambda1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CgpError::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        nonneg("lambda1", self.lambda1)?;
        nonneg("lambda1_c", self.lambda1_c)?;
        nonneg("lambda2_c", self.lambda2_c)?;
        if let RidgePolicy::Fixed(v) = self.ridge {
            nonneg("ridge lambda2", v)?;
        }
        if self.max_iterations == 0 {
            return Err(CgpError::InvalidParameter("max_iterations must be positive".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(CgpError::InvalidParameter("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Quantities that depend on the data only and are computed once per fit.
#[derive(Debug, Clone)]
pub struct GramCache {
    grams: Vec<Array2<f64>>,
    inverses: Vec<Option<Array2<f64>>>,
    ridge: Vec<f64>,
    col_sq_norms: Array1<f64>,
}

impl GramCache {
    pub fn n_lags(&self) -> usize {
        self.grams.len()
    }

    /// `G_i = Σ_k x(k-i) x(k-i)ᵀ`.
    pub fn gram(&self, lag: usize) -> &Array2<f64> {
        &self.grams[lag - 1]
    }

    /// `(G_i + 2λ₂I)⁻¹`, present for lags `i > 1`.
    pub fn inverse(&self, lag: usize) -> Option<&Array2<f64>> {
        self.inverses[lag - 1].as_ref()
    }

    /// Ridge `λ₂` actually used for each lag (zero for lag 1).
    pub fn ridge(&self) -> &[f64] {
        &self.ridge
    }

    /// `d_j = Σ_k x_j(k-1)²`.
    pub fn col_sq_norms(&self) -> &Array1<f64> {
        &self.col_sq_norms
    }

    /// Nodes whose lag-1 signal is identically zero over the window.
    pub fn dead_columns(&self) -> Vec<usize> {
        self.col_sq_norms
            .iter()
            .enumerate()
            .filter(|(_, d)| **d == 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

fn invert_with_ridge(gram: ArrayView2<f64>, lag: usize, policy: RidgePolicy) -> Result<(Array2<f64>, f64)> {
    match policy {
        RidgePolicy::Fixed(l2) => linalg::shifted_spd_inverse(gram, 2.0 * l2, GRAM_INVERSE_TOL)
            .map(|inv| (inv, l2))
            .ok_or(CgpError::SingularGram { lag, ridge: l2 }),
        RidgePolicy::Auto => {
            if let Some(inv) = linalg::shifted_spd_inverse(gram, 0.0, GRAM_INVERSE_TOL) {
                return Ok((inv, 0.0));
            }
            let n = gram.nrows() as f64;
            let trace = gram.diag().sum();
            let mut l2 = if trace > 0.0 { 1e-10 * trace / n } else { 1e-10 };
            for _ in 0..RIDGE_ESCALATION_STEPS {
                if let Some(inv) = linalg::shifted_spd_inverse(gram, 2.0 * l2, GRAM_INVERSE_TOL) {
                    return Ok((inv, l2));
                }
                l2 *= 10.0;
            }
            Err(CgpError::SingularGram { lag, ridge: l2 })
        }
    }
}

/// Precomputes the lag Gram matrices over `k = M..K-1` and the inverses used by
/// the `R_i` updates.
pub fn build_gram_cache(x: &TimeSeries, n_lags: usize, ridge: RidgePolicy) -> Result<GramCache> {
    x.require_lags(n_lags)?;
    let mut grams = Vec::with_capacity(n_lags);
    let mut inverses = Vec::with_capacity(n_lags);
    let mut ridges = Vec::with_capacity(n_lags);
    for lag in 1..=n_lags {
        let xl = x.lagged(n_lags, lag);
        let g = xl.dot(&xl.t());
        if lag == 1 {
            inverses.push(None);
            ridges.push(0.0);
        } else {
            let (inv, l2) = invert_with_ridge(g.view(), lag, ridge)?;
            inverses.push(Some(inv));
            ridges.push(l2);
        }
        grams.push(g);
    }
    let col_sq_norms = grams[0].diag().to_owned();
    Ok(GramCache {
        grams,
        inverses,
        ridge: ridges,
        col_sq_norms,
    })
}

/// Why the R-stage loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIter,
    ParamDelta,
    MseDelta,
    MseIncrease,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::MaxIter => "max_iter",
            StopReason::ParamDelta => "param_delta",
            StopReason::MseDelta => "mse_delta",
            StopReason::MseIncrease => "mse_increase",
        }
    }
}

/// Output of [`compute_r`].
#[derive(Debug, Clone)]
pub struct RStageFit {
    pub r: LagCoefficients,
    pub a: AdjacencyMatrix,
    pub n_sweeps: usize,
    pub stop_reason: StopReason,
    /// `½·RSS + λ₁‖R₁‖₁ + Σ_i λ₂⁽ⁱ⁾‖R_i‖²` after each sweep.
    pub objective_trace: Vec<f64>,
    /// In-sample MSE after each sweep.
    pub mse_trace: Vec<f64>,
    pub ridge: Vec<f64>,
    pub dead_columns: Vec<usize>,
}

/// A complete estimate: lag matrices, adjacency matrix and polynomial coefficients.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub lambda1: f64,
    pub r: LagCoefficients,
    pub a: AdjacencyMatrix,
    pub c: PolyCoefficients,
    pub n_sweeps: usize,
    pub stop_reason: StopReason,
    pub objective_trace: Vec<f64>,
    pub ridge: Vec<f64>,
    pub dead_columns: Vec<usize>,
}

/// Result of a single `R_1` column update.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnUpdate {
    pub column: Array1<f64>,
    /// `d_j = 0`: the column is forced to zero.
    pub dead: bool,
}

/// Mutable R-stage state with an incrementally maintained residual.
struct Ccd<'a> {
    targets: ArrayView2<'a, f64>,
    lagged: Vec<ArrayView2<'a, f64>>,
    cache: &'a GramCache,
    r: LagCoefficients,
    residual: Array2<f64>,
    dead: BTreeSet<usize>,
}

impl<'a> Ccd<'a> {
    fn new(x: &'a TimeSeries, cache: &'a GramCache, r: LagCoefficients) -> Result<Self> {
        let m = cache.n_lags();
        if r.n_lags() != m || r.n_nodes() != x.n_nodes() || cache.col_sq_norms.len() != x.n_nodes() {
            return Err(CgpError::DimensionMismatch {
                context: "coordinate descent state",
                expected: format!("{m} lags of {n}x{n}", n = x.n_nodes()),
                found: format!("{} lags of {n}x{n}", r.n_lags(), n = r.n_nodes()),
            });
        }
        let mut state = Self {
            targets: x.targets(m),
            lagged: (1..=m).map(|l| x.lagged(m, l)).collect(),
            cache,
            r,
            residual: Array2::zeros((0, 0)),
            dead: BTreeSet::new(),
        };
        state.recompute_residual();
        Ok(state)
    }

    fn recompute_residual(&mut self) {
        let mut e = self.targets.to_owned();
        for (l, xl) in self.lagged.iter().enumerate() {
            let rl = self.r.lag(l + 1);
            if rl.iter().any(|v| *v != 0.0) {
                ndarray::linalg::general_mat_mul(-1.0, rl, xl, 1.0, &mut e);
            }
        }
        self.residual = e;
    }

    fn rss(&self) -> f64 {
        self.residual.iter().map(|v| v * v).sum()
    }

    fn objective(&self, lambda1: f64) -> f64 {
        let l1: f64 = self.r.lag(1).iter().map(|v| v.abs()).sum();
        let ridge: f64 = (2..=self.r.n_lags())
            .map(|i| self.cache.ridge[i - 1] * self.r.lag(i).iter().map(|v| v * v).sum::<f64>())
            .sum();
        0.5 * self.rss() + lambda1 * l1 + ridge
    }

    fn propose_column(&self, j: usize, lambda1: f64) -> ColumnUpdate {
        let d = self.cache.col_sq_norms[j];
        let n = self.targets.nrows();
        if d == 0.0 {
            return ColumnUpdate {
                column: Array1::zeros(n),
                dead: true,
            };
        }
        // Σ_k (S¹_k − R₁^{−j} x^{−j}(k−1)) x_j(k−1) = E·x_j + R₁^j d_j
        let mut num = column_correlation(&self.residual, self.lagged[0], j);
        num.scaled_add(d, &self.r.lag(1).column(j));
        ColumnUpdate {
            column: num.mapv(|v| soft_threshold(v, lambda1) / d),
            dead: false,
        }
    }

    fn update_column(&mut self, j: usize, lambda1: f64) {
        let update = self.propose_column(j, lambda1);
        if update.dead {
            self.dead.insert(j);
        }
        let xj = self.lagged[0].row(j);
        let r1 = self.r.lag_mut(1);
        for i in 0..update.column.len() {
            let delta = update.column[i] - r1[[i, j]];
            if delta != 0.0 {
                r1[[i, j]] = update.column[i];
                self.residual.row_mut(i).scaled_add(-delta, &xj);
            }
        }
    }

    fn column_pass(&mut self, lambda1: f64) {
        for j in 0..self.targets.nrows() {
            self.update_column(j, lambda1);
        }
    }

    fn propose_lag(&self, lag: usize) -> Array2<f64> {
        let xl = self.lagged[lag - 1];
        // Σ_k S^i_k x(k−i)ᵀ = E X_iᵀ + R_i G_i
        let mut b = self.residual.dot(&xl.t());
        ndarray::linalg::general_mat_mul(1.0, self.r.lag(lag), self.cache.gram(lag), 1.0, &mut b);
        let inv = self.cache.inverse(lag).expect("lags above one carry an inverse");
        b.dot(inv)
    }

    fn update_lag(&mut self, lag: usize) {
        let new = self.propose_lag(lag);
        let delta = &new - self.r.lag(lag);
        if delta.iter().any(|v| *v != 0.0) {
            ndarray::linalg::general_mat_mul(-1.0, &delta, &self.lagged[lag - 1], 1.0, &mut self.residual);
        }
        *self.r.lag_mut(lag) = new;
    }

    fn sweep(&mut self, lambda1: f64) {
        self.column_pass(lambda1);
        for lag in 2..=self.r.n_lags() {
            self.update_lag(lag);
        }
        self.recompute_residual();
    }
}

/// Proposed `R_i` for a lag `i ≥ 2`, holding all other lags fixed.
pub fn update_ri(lag: usize, x: &TimeSeries, r: &LagCoefficients, cache: &GramCache) -> Result<Array2<f64>> {
    if lag < 2 || lag > cache.n_lags() {
        return Err(CgpError::OutOfRange {
            context: "matrix update lag",
            index: lag,
            min: 2,
            max: cache.n_lags(),
        });
    }
    let state = Ccd::new(x, cache, r.clone())?;
    Ok(state.propose_lag(lag))
}

/// Proposed column `j` of `R_1` under LASSO weight `lambda1`, holding everything else fixed.
pub fn update_r1_column(
    j: usize,
    x: &TimeSeries,
    r: &LagCoefficients,
    lambda1: f64,
    cache: &GramCache,
) -> Result<ColumnUpdate> {
    if j >= x.n_nodes() {
        return Err(CgpError::OutOfRange {
            context: "column index",
            index: j,
            min: 0,
            max: x.n_nodes() - 1,
        });
    }
    let state = Ccd::new(x, cache, r.clone())?;
    Ok(state.propose_column(j, lambda1))
}

/// `E·x_j` over the lag-1 regressors. Shared with [`lambda_max`] so both round identically.
fn column_correlation(residual: &Array2<f64>, lagged1: ArrayView2<f64>, j: usize) -> Array1<f64> {
    residual.dot(&lagged1.row(j))
}

/// Smallest `λ₁` for which the first column sweep from zero leaves `R_1 = 0`.
pub fn lambda_max(x: &TimeSeries, n_lags: usize) -> Result<f64> {
    x.require_lags(n_lags)?;
    let residual = x.targets(n_lags).to_owned();
    let lagged = x.lagged(n_lags, 1);
    Ok((0..x.n_nodes())
        .flat_map(|j| column_correlation(&residual, lagged, j))
        .fold(0.0, |acc, v| acc.max(v.abs())))
}

/// Mean over `k = M..K-1` of `‖x(k) − Σ_l R_l x(k−l)‖² / N`.
pub fn in_sample_mse(x: &TimeSeries, r: &LagCoefficients) -> Result<f64> {
    let m = r.n_lags();
    x.require_lags(m)?;
    if r.n_nodes() != x.n_nodes() {
        return Err(CgpError::DimensionMismatch {
            context: "in-sample mse",
            expected: format!("{} nodes", x.n_nodes()),
            found: format!("{} nodes", r.n_nodes()),
        });
    }
    let rss = residual_sum_of_squares(x, r)?;
    Ok(rss / (x.n_nodes() * (x.n_samples() - m)) as f64)
}

/// Sum of squared in-sample one-step residuals of `r` over `k = M..K-1`.
pub(crate) fn residual_sum_of_squares(x: &TimeSeries, r: &LagCoefficients) -> Result<f64> {
    let m = r.n_lags();
    x.require_lags(m)?;
    let mut e = x.targets(m).to_owned();
    for l in 1..=m {
        ndarray::linalg::general_mat_mul(-1.0, r.lag(l), &x.lagged(m, l), 1.0, &mut e);
    }
    Ok(e.iter().map(|v| v * v).sum())
}

/// Residual sum of squares over every sample of `eval`, with the last `M` samples
/// of `history` supplying the regressors of the first `M` predictions.
pub(crate) fn residual_sum_of_squares_after(history: &TimeSeries, eval: &TimeSeries, r: &LagCoefficients) -> Result<f64> {
    let m = r.n_lags();
    let h = history.n_samples();
    if h < m {
        return Err(CgpError::InsufficientData { samples: h, lags: m });
    }
    let joined = ndarray::concatenate(
        Axis(1),
        &[history.values().slice(ndarray::s![.., h - m..]), eval.values()],
    )
    .map_err(|e| CgpError::DimensionMismatch {
        context: "history join",
        expected: format!("{} nodes", history.n_nodes()),
        found: e.to_string(),
    })?;
    residual_sum_of_squares(&TimeSeries::new(joined)?, r)
}

/// Runs the R-stage coordinate descent and the adjacency extraction pass.
pub fn compute_r(x: &TimeSeries, n_lags: usize, opts: &SolverOptions) -> Result<RStageFit> {
    opts.validate()?;
    let cache = build_gram_cache(x, n_lags, opts.ridge)?;
    compute_r_with_cache(x, &cache, opts)
}

/// [`compute_r`] reusing a prebuilt cache.
pub fn compute_r_with_cache(x: &TimeSeries, cache: &GramCache, opts: &SolverOptions) -> Result<RStageFit> {
    opts.validate()?;
    let m = cache.n_lags();
    let n = x.n_nodes();
    let n_scalars = (n * (x.n_samples() - m)) as f64;
    let mut state = Ccd::new(x, cache, LagCoefficients::zeros(n, m))?;

    let mut mse_prev = state.rss() / n_scalars;
    let mut objective_trace = Vec::new();
    let mut mse_trace = Vec::new();
    let mut stop_reason = StopReason::MaxIter;
    let mut n_sweeps = 0;

    while n_sweeps < opts.max_iterations {
        let previous = state.r.clone();
        state.sweep(opts.lambda1);
        n_sweeps += 1;

        let mse = state.rss() / n_scalars;
        objective_trace.push(state.objective(opts.lambda1));
        mse_trace.push(mse);

        if opts.stop_on_mse_increase && mse > mse_prev {
            state.r = previous;
            state.recompute_residual();
            stop_reason = StopReason::MseIncrease;
            break;
        }
        if state.r.l1_distance(&previous) < opts.epsilon {
            stop_reason = StopReason::ParamDelta;
            break;
        }
        if (mse - mse_prev).abs() < opts.epsilon {
            stop_reason = StopReason::MseDelta;
            break;
        }
        mse_prev = mse;
    }

    let r = state.r.clone();
    state.column_pass(opts.lambda1);
    let a = AdjacencyMatrix::new(state.r.lag(1).clone())?;

    Ok(RStageFit {
        r,
        a,
        n_sweeps,
        stop_reason,
        objective_trace,
        mse_trace,
        ridge: cache.ridge.clone(),
        dead_columns: state.dead.into_iter().collect(),
    })
}

/// Cached regressors `Â^j x(k−i)` for every free coefficient.
struct PolyDesign {
    slots: Vec<(usize, usize)>,
    /// `⟨F_a, y⟩`.
    corr: Vec<f64>,
    /// `⟨F_a, F_b⟩`.
    gram: Array2<f64>,
    n_terms: usize,
}

impl PolyDesign {
    fn new(x: &TimeSeries, a_hat: &AdjacencyMatrix, n_lags: usize) -> Self {
        let m = n_lags;
        let mut y = x.targets(m).to_owned();
        ndarray::linalg::general_mat_mul(-1.0, a_hat.weights(), &x.lagged(m, 1), 1.0, &mut y);

        let mut slots = Vec::new();
        let mut features: Vec<Array2<f64>> = Vec::new();
        for lag in 2..=m {
            let mut f = x.lagged(m, lag).to_owned();
            for power in 0..=lag {
                if power > 0 {
                    f = a_hat.weights().dot(&f);
                }
                slots.push((lag, power));
                features.push(f.clone());
            }
        }
        let frob = |a: &Array2<f64>, b: &Array2<f64>| Zip::from(a).and(b).fold(0.0, |acc, u, v| acc + u * v);
        let p = features.len();
        let corr = features.iter().map(|f| frob(f, &y)).collect();
        let mut gram = Array2::zeros((p, p));
        for a in 0..p {
            for b in a..p {
                let v = frob(&features[a], &features[b]);
                gram[[a, b]] = v;
                gram[[b, a]] = v;
            }
        }
        Self {
            slots,
            corr,
            gram,
            n_terms: x.n_samples() - m,
        }
    }
}

/// Fits the free polynomial coefficients by cyclical coordinate descent with L1
/// weight `(K−M)·λ₁ᶜ` and L2 weight `(K−M)·λ₂ᶜ`, holding `Â` fixed.
pub fn fit_c(x: &TimeSeries, a_hat: &AdjacencyMatrix, n_lags: usize, opts: &SolverOptions) -> Result<PolyCoefficients> {
    opts.validate()?;
    x.require_lags(n_lags)?;
    if a_hat.n_nodes() != x.n_nodes() {
        return Err(CgpError::DimensionMismatch {
            context: "fit_c",
            expected: format!("{} nodes", x.n_nodes()),
            found: format!("{} nodes", a_hat.n_nodes()),
        });
    }
    let mut coeffs = PolyCoefficients::new(n_lags);
    if n_lags == 1 {
        return Ok(coeffs);
    }
    let design = PolyDesign::new(x, a_hat, n_lags);
    let t = design.n_terms as f64;
    let threshold = t * opts.lambda1_c;
    let ridge = 2.0 * t * opts.lambda2_c;
    let p = design.slots.len();
    let mut c = vec![0.0; p];

    for _ in 0..opts.max_iterations {
        let mut change = 0.0;
        for a in 0..p {
            let others: f64 = (0..p).filter(|b| *b != a).map(|b| design.gram[[a, b]] * c[b]).sum();
            let denom = design.gram[[a, a]] + ridge;
            let new = if denom > 0.0 {
                soft_threshold(design.corr[a] - others, threshold) / denom
            } else {
                0.0
            };
            change += (new - c[a]).abs();
            c[a] = new;
        }
        if change < opts.epsilon {
            break;
        }
    }
    for ((lag, power), v) in design.slots.iter().zip(c) {
        coeffs.set(*lag, *power, v)?;
    }
    Ok(coeffs)
}

/// Full estimate at a fixed `λ₁`: R-stage, adjacency extraction, then polynomial fit.
pub fn fit(x: &TimeSeries, n_lags: usize, opts: &SolverOptions) -> Result<FitResult> {
    let stage = compute_r(x, n_lags, opts)?;
    let c = fit_c(x, &stage.a, n_lags, opts)?;
    Ok(FitResult {
        lambda1: opts.lambda1,
        r: stage.r,
        a: stage.a,
        c,
        n_sweeps: stage.n_sweeps,
        stop_reason: stage.stop_reason,
        objective_trace: stage.objective_trace,
        ridge: stage.ridge,
        dead_columns: stage.dead_columns,
    })
}
