//! Core domain types and the causal graph process forward model.
//!
//! A causal graph process evolves as
//! `x(k) = w(k) + Σ_l P_l(A) x(k-l)` where each graph filter
//! `P_l(A) = Σ_{j=0}^{l} c[l,j] A^j` is a polynomial in the adjacency matrix.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CgpError, Result};

/// Any simulated value whose magnitude exceeds this is treated as divergence.
pub const OVERFLOW_GUARD: f64 = 1e12;

fn check_finite(context: &'static str, m: ArrayView2<f64>) -> Result<()> {
    for ((row, col), v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(CgpError::NonFinite { context, row, col });
        }
    }
    Ok(())
}

/// Node signals over time, stored node-major: entry `(i, k)` is node `i` at time `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Array2<f64>,
}

impl TimeSeries {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(CgpError::InvalidParameter(
                "time series must have at least one node and one sample".into(),
            ));
        }
        check_finite("time series", values.view())?;
        Ok(Self { values })
    }

    pub fn n_nodes(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }

    /// Signal vector `x(k)`.
    pub fn at(&self, k: usize) -> ArrayView1<'_, f64> {
        self.values.column(k)
    }

    /// Contiguous sub-series `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> Result<TimeSeries> {
        if len == 0 || start + len > self.n_samples() {
            return Err(CgpError::OutOfRange {
                context: "time series window",
                index: start + len,
                min: 1,
                max: self.n_samples(),
            });
        }
        Ok(TimeSeries {
            values: self.values.slice(s![.., start..start + len]).to_owned(),
        })
    }

    /// Splits into a leading training window and the trailing `fraction` as a test window.
    pub fn split_tail(&self, fraction: f64) -> Result<(TimeSeries, TimeSeries)> {
        if !(0.0..1.0).contains(&fraction) || fraction == 0.0 {
            return Err(CgpError::InvalidParameter(format!(
                "holdout fraction must lie in (0, 1), got {fraction}"
            )));
        }
        let k = self.n_samples();
        let test_len = ((k as f64) * fraction).round() as usize;
        if test_len == 0 || test_len >= k {
            return Err(CgpError::InsufficientData {
                samples: k,
                lags: 0,
            });
        }
        Ok((self.window(0, k - test_len)?, self.window(k - test_len, test_len)?))
    }

    pub(crate) fn require_lags(&self, n_lags: usize) -> Result<()> {
        if n_lags == 0 {
            return Err(CgpError::InvalidParameter("at least one lag is required".into()));
        }
        if self.n_samples() <= n_lags {
            return Err(CgpError::InsufficientData {
                samples: self.n_samples(),
                lags: n_lags,
            });
        }
        Ok(())
    }

    /// Prediction targets `x(M), ..., x(K-1)` as an `N × (K-M)` view.
    pub(crate) fn targets(&self, n_lags: usize) -> ArrayView2<'_, f64> {
        self.values.slice(s![.., n_lags..])
    }

    /// Regressors for lag `i`: `x(M-i), ..., x(K-1-i)` aligned with [`TimeSeries::targets`].
    pub(crate) fn lagged(&self, n_lags: usize, lag: usize) -> ArrayView2<'_, f64> {
        let k = self.n_samples();
        self.values.slice(s![.., n_lags - lag..k - lag])
    }
}

/// Unconstrained lag matrices `R_1, ..., R_M`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagCoefficients {
    mats: Vec<Array2<f64>>,
}

impl LagCoefficients {
    pub fn zeros(n_nodes: usize, n_lags: usize) -> Self {
        Self {
            mats: (0..n_lags).map(|_| Array2::zeros((n_nodes, n_nodes))).collect(),
        }
    }

    pub fn new(mats: Vec<Array2<f64>>) -> Result<Self> {
        let Some(first) = mats.first() else {
            return Err(CgpError::InvalidParameter("at least one lag matrix is required".into()));
        };
        let n = first.nrows();
        for m in &mats {
            if m.nrows() != n || m.ncols() != n {
                return Err(CgpError::DimensionMismatch {
                    context: "lag coefficients",
                    expected: format!("{n}x{n}"),
                    found: format!("{}x{}", m.nrows(), m.ncols()),
                });
            }
            check_finite("lag coefficients", m.view())?;
        }
        Ok(Self { mats })
    }

    pub fn n_lags(&self) -> usize {
        self.mats.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.mats[0].nrows()
    }

    /// Matrix for lag `l`, 1-based.
    pub fn lag(&self, l: usize) -> &Array2<f64> {
        &self.mats[l - 1]
    }

    pub fn lag_mut(&mut self, l: usize) -> &mut Array2<f64> {
        &mut self.mats[l - 1]
    }

    pub fn mats(&self) -> &[Array2<f64>] {
        &self.mats
    }

    /// Entrywise L1 distance summed over all lags.
    pub fn l1_distance(&self, other: &LagCoefficients) -> f64 {
        self.mats
            .iter()
            .zip(&other.mats)
            .map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>())
            .sum()
    }
}

/// Directed weighted adjacency matrix. Entry `(i, j)` is the weight of the edge `j → i`,
/// so column `j` lists the out-edges of node `j`. Exact zeros mean "no edge".
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    weights: Array2<f64>,
}

impl AdjacencyMatrix {
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        if weights.nrows() != weights.ncols() {
            return Err(CgpError::DimensionMismatch {
                context: "adjacency matrix",
                expected: "square".into(),
                found: format!("{}x{}", weights.nrows(), weights.ncols()),
            });
        }
        check_finite("adjacency matrix", weights.view())?;
        Ok(Self { weights })
    }

    pub fn zeros(n_nodes: usize) -> Self {
        Self {
            weights: Array2::zeros((n_nodes, n_nodes)),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.weights
    }

    pub fn edge_count(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }

    /// Fraction of the `N²` possible entries that are edges.
    pub fn density(&self) -> f64 {
        let n = self.n_nodes() as f64;
        self.edge_count() as f64 / (n * n)
    }

    pub fn is_empty(&self) -> bool {
        self.edge_count() == 0
    }

    /// Nonzero `(row, col, weight)` triplets in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.weights
            .indexed_iter()
            .filter(|(_, w)| **w != 0.0)
            .map(|((i, j), w)| (i, j, *w))
            .collect()
    }
}

/// Polynomial coefficients `c[l, j]` for `l = 1..=M`, `j = 0..=l`.
///
/// The first lag is pinned to `(c[1,0], c[1,1]) = (0, 1)`, so `P_1(A) = A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyCoefficients {
    rows: Vec<Vec<f64>>,
}

impl PolyCoefficients {
    /// Coefficients with the fixed first lag and every free coefficient zero.
    pub fn new(n_lags: usize) -> Self {
        let rows = (1..=n_lags)
            .map(|l| {
                let mut row = vec![0.0; l + 1];
                if l == 1 {
                    row[1] = 1.0;
                }
                row
            })
            .collect();
        Self { rows }
    }

    pub fn n_lags(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, lag: usize, power: usize) -> f64 {
        self.rows[lag - 1][power]
    }

    /// Sets a free coefficient. The first lag cannot be changed.
    pub fn set(&mut self, lag: usize, power: usize, value: f64) -> Result<()> {
        if lag < 2 || lag > self.n_lags() || power > lag {
            return Err(CgpError::InvalidParameter(format!(
                "coefficient ({lag}, {power}) is not a free coefficient"
            )));
        }
        if !value.is_finite() {
            return Err(CgpError::NonFinite {
                context: "poly coefficients",
                row: lag,
                col: power,
            });
        }
        self.rows[lag - 1][power] = value;
        Ok(())
    }

    /// The free `(lag, power)` slots in lexicographic order.
    pub fn free_indices(&self) -> Vec<(usize, usize)> {
        (2..=self.n_lags())
            .flat_map(|l| (0..=l).map(move |j| (l, j)))
            .collect()
    }

    /// Coefficients of lag `l`, indexed by power.
    pub fn lag(&self, l: usize) -> &[f64] {
        &self.rows[l - 1]
    }
}

/// I.i.d. Gaussian innovation noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(CgpError::InvalidParameter(format!("noise sigma must be >= 0, got {sigma}")));
        }
        Ok(Self { sigma, seed })
    }
}

/// Evaluates `P_l(A) = Σ_{j=0}^{l} c[l,j] A^j` by Horner accumulation.
pub fn graph_filter(a: &AdjacencyMatrix, coeffs: &PolyCoefficients, lag: usize) -> Result<Array2<f64>> {
    if lag == 0 || lag > coeffs.n_lags() {
        return Err(CgpError::OutOfRange {
            context: "graph filter lag",
            index: lag,
            min: 1,
            max: coeffs.n_lags(),
        });
    }
    let n = a.n_nodes();
    let c = coeffs.lag(lag);
    let eye = Array2::<f64>::eye(n);
    let mut acc = &eye * c[lag];
    for j in (0..lag).rev() {
        acc = acc.dot(a.weights()) + &eye * c[j];
    }
    Ok(acc)
}

/// One-step prediction `Σ_l R_l x(k-l)`.
pub fn predict(x: &TimeSeries, r: &LagCoefficients, k: usize) -> Result<Array1<f64>> {
    let m = r.n_lags();
    if r.n_nodes() != x.n_nodes() {
        return Err(CgpError::DimensionMismatch {
            context: "predict",
            expected: format!("{} nodes", x.n_nodes()),
            found: format!("{} nodes", r.n_nodes()),
        });
    }
    if k < m || k >= x.n_samples() {
        return Err(CgpError::OutOfRange {
            context: "prediction time index",
            index: k,
            min: m,
            max: x.n_samples().saturating_sub(1),
        });
    }
    let mut out = Array1::zeros(x.n_nodes());
    for l in 1..=m {
        out += &r.lag(l).dot(&x.at(k - l));
    }
    Ok(out)
}

/// Generates `burn_in + len` steps from an all-zero history and keeps the last `len`.
pub fn simulate(
    a: &AdjacencyMatrix,
    coeffs: &PolyCoefficients,
    len: usize,
    burn_in: usize,
    noise: NoiseSpec,
) -> Result<TimeSeries> {
    simulate_from(a, coeffs, len, burn_in, noise, &[])
}

/// As [`simulate`], with `initial` supplying the most recent history vectors
/// (`initial[0]` is `x(-1)`, `initial[1]` is `x(-2)`, ...). Missing history is zero.
pub fn simulate_from(
    a: &AdjacencyMatrix,
    coeffs: &PolyCoefficients,
    len: usize,
    burn_in: usize,
    noise: NoiseSpec,
    initial: &[Array1<f64>],
) -> Result<TimeSeries> {
    if len == 0 {
        return Err(CgpError::InvalidParameter("series length must be positive".into()));
    }
    let n = a.n_nodes();
    let m = coeffs.n_lags();
    if initial.len() > m || initial.iter().any(|v| v.len() != n) {
        return Err(CgpError::DimensionMismatch {
            context: "initial history",
            expected: format!("at most {m} vectors of length {n}"),
            found: format!("{} vectors", initial.len()),
        });
    }
    let filters = (1..=m)
        .map(|l| graph_filter(a, coeffs, l))
        .collect::<Result<Vec<_>>>()?;

    let total = burn_in + len;
    // Columns 0..m hold the pre-sample history, oldest first.
    let mut buf = Array2::<f64>::zeros((n, m + total));
    for (back, v) in initial.iter().enumerate() {
        buf.column_mut(m - 1 - back).assign(v);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let normal = Normal::new(0.0, noise.sigma.max(0.0))
        .map_err(|e| CgpError::InvalidParameter(e.to_string()))?;

    let mut next = Array1::<f64>::zeros(n);
    for step in 0..total {
        let t = m + step;
        next.fill(0.0);
        for (l, filter) in filters.iter().enumerate() {
            next += &filter.dot(&buf.column(t - 1 - l));
        }
        if noise.sigma > 0.0 {
            for v in next.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
        if let Some(v) = next.iter().find(|v| !(v.abs() <= OVERFLOW_GUARD)) {
            return Err(CgpError::Instability {
                step,
                value: v.abs(),
            });
        }
        buf.column_mut(t).assign(&next);
    }
    TimeSeries::new(buf.slice(s![.., m + burn_in..]).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;

    fn random_matrix(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn first_lag_filter_is_identity_map() {
        let a = AdjacencyMatrix::new(random_matrix(5, 1)).unwrap();
        let c = PolyCoefficients::new(3);
        assert_eq!(graph_filter(&a, &c, 1).unwrap(), *a.weights());
    }

    #[test]
    fn zero_matrix_keeps_only_constant_term() {
        let a = AdjacencyMatrix::zeros(4);
        let mut c = PolyCoefficients::new(2);
        c.set(2, 0, 0.3).unwrap();
        c.set(2, 2, 0.9).unwrap();
        let p = graph_filter(&a, &c, 2).unwrap();
        assert_eq!(p, Array2::<f64>::eye(4) * 0.3);
    }

    #[test]
    fn horner_matches_power_sum() {
        let a = AdjacencyMatrix::new(random_matrix(4, 7)).unwrap();
        let mut c = PolyCoefficients::new(3);
        for (j, v) in [0.2, -0.7, 0.4, 1.3].iter().enumerate() {
            c.set(3, j, *v).unwrap();
        }
        // Oracle: explicit powers by repeated multiplication.
        let mut power = Array2::<f64>::eye(4);
        let mut expected = Array2::<f64>::zeros((4, 4));
        for j in 0..=3 {
            expected = expected + &power * c.get(3, j);
            power = power.dot(a.weights());
        }
        let got = graph_filter(&a, &c, 3).unwrap();
        for (g, e) in got.iter().zip(expected.iter()) {
            assert!((g - e).abs() <= 1e-12 * e.abs().max(1.0));
        }
    }

    #[test]
    fn first_lag_is_not_settable() {
        let mut c = PolyCoefficients::new(2);
        assert!(c.set(1, 0, 0.5).is_err());
        assert!(c.set(2, 3, 0.5).is_err());
        assert_eq!(c.free_indices(), vec![(2, 0), (2, 1), (2, 2)]);
    }

    #[test]
    fn predict_cases() {
        let x = TimeSeries::new(random_matrix(3, 3)).unwrap();
        let zero = LagCoefficients::zeros(3, 1);
        assert_eq!(predict(&x, &zero, 1).unwrap(), Array1::<f64>::zeros(3));

        let ident = LagCoefficients::new(vec![Array2::eye(3)]).unwrap();
        assert_eq!(predict(&x, &ident, 2).unwrap(), x.at(1).to_owned());
        assert!(matches!(predict(&x, &ident, 0), Err(CgpError::OutOfRange { .. })));
    }

    #[test]
    fn predict_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = TimeSeries::new(Array2::from_shape_fn((3, 8), |_| rng.random_range(-2.0..2.0))).unwrap();
        let r = LagCoefficients::new(vec![random_matrix(3, 12), random_matrix(3, 13)]).unwrap();
        for k in 2..8 {
            let got = predict(&x, &r, k).unwrap();
            for i in 0..3 {
                let mut acc = 0.0;
                for l in 1..=2 {
                    for j in 0..3 {
                        acc += r.lag(l)[[i, j]] * x.values()[[j, k - l]];
                    }
                }
                assert_abs_diff_eq!(got[i], acc, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn silent_process_stays_zero() {
        let a = AdjacencyMatrix::new(random_matrix(4, 2) * 0.1).unwrap();
        let x = simulate(&a, &PolyCoefficients::new(2), 20, 5, NoiseSpec::new(0.0, 1).unwrap()).unwrap();
        assert!(x.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_ar1_decays_geometrically() {
        let a = AdjacencyMatrix::new(array![[0.8]]).unwrap();
        let noise = NoiseSpec::new(0.0, 0).unwrap();
        let x0 = array![2.0];
        let x = simulate_from(&a, &PolyCoefficients::new(1), 10, 0, noise, &[x0]).unwrap();
        for k in 0..10 {
            assert_abs_diff_eq!(x.values()[[0, k]], 2.0 * 0.8f64.powi(k as i32 + 1), epsilon = 1e-14);
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let a = AdjacencyMatrix::new(random_matrix(10, 5) * 0.05).unwrap();
        let mut c = PolyCoefficients::new(3);
        c.set(2, 0, 0.1).unwrap();
        c.set(3, 1, -0.1).unwrap();
        let noise = NoiseSpec::new(1.0, 99).unwrap();
        let x1 = simulate(&a, &c, 200, 50, noise).unwrap();
        let x2 = simulate(&a, &c, 200, 50, noise).unwrap();
        let b1: Vec<u64> = x1.values().iter().map(|v| v.to_bits()).collect();
        let b2: Vec<u64> = x2.values().iter().map(|v| v.to_bits()).collect();
        assert_eq!(b1, b2);
    }

    #[test]
    fn divergence_trips_guard() {
        let a = AdjacencyMatrix::new(array![[3.0]]).unwrap();
        let err = simulate(&a, &PolyCoefficients::new(1), 100, 0, NoiseSpec::new(1.0, 0).unwrap())
            .unwrap_err();
        assert!(matches!(err, CgpError::Instability { .. }));
    }

    #[test]
    fn rejects_non_finite_series() {
        let mut v = Array2::zeros((2, 3));
        v[[1, 2]] = f64::NAN;
        assert!(matches!(
            TimeSeries::new(v),
            Err(CgpError::NonFinite { row: 1, col: 2, .. })
        ));
    }

    #[test]
    fn edge_count_is_exact_nonzero() {
        let a = AdjacencyMatrix::new(array![[0.0, 1e-300], [-0.5, 0.0]]).unwrap();
        assert_eq!(a.edge_count(), 2);
        assert_eq!(a.triplets(), vec![(0, 1, 1e-300), (1, 0, -0.5)]);
    }
}
