//! Ground-truth causal graph processes on stochastic block models.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CgpError, Result};
use crate::linalg::spectral_radius;
use crate::model::{simulate, AdjacencyMatrix, NoiseSpec, PolyCoefficients, TimeSeries};

pub const DEFAULT_BURN_IN: usize = 500;
pub const DEFAULT_DENSITY: f64 = 0.021;
pub const DEFAULT_IN_OUT_RATIO: f64 = 5.0;
const MAX_SAMPLING_ATTEMPTS: usize = 1000;

// Independent streams for the three random components of an instance.
const ADJACENCY_STREAM: u64 = 0;
const COEFF_STREAM: u64 = 0x5eed_c0ef;
const NOISE_STREAM: u64 = 0x0015_e000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub n_nodes: usize,
    pub n_clusters: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub weight_low: f64,
    pub weight_high: f64,
    pub sign_prob: f64,
    pub spectral_target: f64,
    /// Geometric shrink of higher-lag polynomial coefficients.
    pub decay: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SbmParams {
    /// Parameters whose expected edge density is `density` with `p_in = 5·p_out`.
    pub fn with_density(n_nodes: usize, n_clusters: usize, density: f64, seed: u64) -> Result<Self> {
        if n_nodes < 2 || n_clusters == 0 || n_clusters > n_nodes {
            return Err(CgpError::InvalidParameter(format!(
                "need 2 <= nodes and 1 <= clusters <= nodes, got {n_nodes} nodes / {n_clusters} clusters"
            )));
        }
        let sizes = cluster_sizes(n_nodes, n_clusters);
        let (pairs_in, pairs_out) = pair_counts(&sizes);
        let target_edges = density * (n_nodes * n_nodes) as f64;
        let p_out = target_edges / (DEFAULT_IN_OUT_RATIO * pairs_in + pairs_out);
        let p_in = DEFAULT_IN_OUT_RATIO * p_out;
        if !(p_in <= 1.0) {
            return Err(CgpError::InvalidParameter(format!(
                "density {density} is unreachable with a {DEFAULT_IN_OUT_RATIO}:1 in/out ratio"
            )));
        }
        Ok(Self {
            n_nodes,
            n_clusters,
            p_in,
            p_out,
            weight_low: 0.3,
            weight_high: 0.7,
            sign_prob: 0.5,
            spectral_target: 0.5,
            decay: 0.5,
            noise_sigma: 1.0,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CgpError::InvalidParameter(msg));
        if self.n_nodes == 0 || self.n_clusters == 0 || self.n_clusters > self.n_nodes {
            return bad(format!("invalid cluster layout {}/{}", self.n_nodes, self.n_clusters));
        }
        if !(0.0 <= self.p_out && self.p_out <= self.p_in && self.p_in <= 1.0) {
            return bad(format!("need 0 <= p_out <= p_in <= 1, got {} / {}", self.p_out, self.p_in));
        }
        if !(0.0 < self.weight_low && self.weight_low <= self.weight_high) {
            return bad("weight range must satisfy 0 < low <= high".into());
        }
        if !(0.0..=1.0).contains(&self.sign_prob) {
            return bad("sign_prob must lie in [0, 1]".into());
        }
        if !(0.0 < self.spectral_target && self.spectral_target < 1.0) {
            return bad("spectral_target must lie in (0, 1)".into());
        }
        if !(0.0 <= self.decay && self.decay < 1.0) {
            return bad("decay must lie in [0, 1)".into());
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be >= 0".into());
        }
        Ok(())
    }

    /// Expected number of edges `p_in·#intra + p_out·#inter` over ordered pairs `i ≠ j`.
    pub fn expected_edges(&self) -> f64 {
        let (pairs_in, pairs_out) = pair_counts(&cluster_sizes(self.n_nodes, self.n_clusters));
        self.p_in * pairs_in + self.p_out * pairs_out
    }

    /// Binomial-mixture variance of the edge count.
    pub fn edge_count_variance(&self) -> f64 {
        let (pairs_in, pairs_out) = pair_counts(&cluster_sizes(self.n_nodes, self.n_clusters));
        pairs_in * self.p_in * (1.0 - self.p_in) + pairs_out * self.p_out * (1.0 - self.p_out)
    }

    pub fn expected_density(&self) -> f64 {
        self.expected_edges() / (self.n_nodes * self.n_nodes) as f64
    }
}

/// Near-equal contiguous cluster sizes.
pub fn cluster_sizes(n_nodes: usize, n_clusters: usize) -> Vec<usize> {
    let mut sizes = vec![0; n_clusters];
    for c in cluster_labels(n_nodes, n_clusters) {
        sizes[c] += 1;
    }
    sizes
}

/// Cluster label of every node.
pub fn cluster_labels(n_nodes: usize, n_clusters: usize) -> Vec<usize> {
    (0..n_nodes).map(|v| v * n_clusters / n_nodes).collect()
}

fn pair_counts(sizes: &[usize]) -> (f64, f64) {
    let n: usize = sizes.iter().sum();
    let inside: usize = sizes.iter().map(|s| s * s.saturating_sub(1)).sum();
    (inside as f64, (n * (n - 1) - inside) as f64)
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Unscaled SBM draw: Bernoulli support, uniform magnitudes, random signs.
fn draw_support(params: &SbmParams, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = params.n_nodes;
    let labels = cluster_labels(n, params.n_clusters);
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let p = if labels[i] == labels[j] { params.p_in } else { params.p_out };
            if rng.random::<f64>() < p {
                let mag = if params.weight_high > params.weight_low {
                    rng.random_range(params.weight_low..params.weight_high)
                } else {
                    params.weight_low
                };
                let sign = if rng.random::<f64>() < params.sign_prob { -1.0 } else { 1.0 };
                w[[i, j]] = sign * mag;
            }
        }
    }
    w
}

/// Whether the support of `w` contains a directed cycle. Acyclic supports are nilpotent.
fn has_cycle(w: &Array2<f64>) -> bool {
    let n = w.nrows();
    let mut indeg: Vec<usize> = (0..n).map(|i| w.row(i).iter().filter(|v| **v != 0.0).count()).collect();
    let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut removed = 0;
    while let Some(j) = ready.pop() {
        removed += 1;
        for i in 0..n {
            if w[[i, j]] != 0.0 {
                indeg[i] -= 1;
                if indeg[i] == 0 {
                    ready.push(i);
                }
            }
        }
    }
    removed < n
}

/// Samples a directed SBM adjacency matrix rescaled to spectral radius `spectral_target`.
///
/// Draws without a cycle are nilpotent and cannot be rescaled; they count as failed
/// attempts, like empty draws. The structural check matters because the computed
/// eigenvalues of a nilpotent matrix are roundoff, not zero.
pub fn sample_adjacency(params: &SbmParams) -> Result<AdjacencyMatrix> {
    params.validate()?;
    let mut rng = rng_for(params.seed, ADJACENCY_STREAM);
    for _ in 0..MAX_SAMPLING_ATTEMPTS {
        let w = draw_support(params, &mut rng);
        if !has_cycle(&w) {
            continue;
        }
        let rho = spectral_radius(w.view());
        if rho <= 1e-12 {
            continue;
        }
        return AdjacencyMatrix::new(w * (params.spectral_target / rho));
    }
    Err(CgpError::EmptyAdjacency {
        attempts: MAX_SAMPLING_ATTEMPTS,
    })
}

/// Draws the complete SBM support with unit weights and no rescaling.
pub fn sample_support(params: &SbmParams) -> Result<AdjacencyMatrix> {
    params.validate()?;
    let mut rng = rng_for(params.seed, ADJACENCY_STREAM);
    AdjacencyMatrix::new(draw_support(params, &mut rng))
}

/// Samples polynomial coefficients for lags `2..=M` and shrinks them until
/// `Σ_{l≥2} Σ_j |c[l,j]|·ρ^j ≤ 0.9·(1 − ρ)`, which keeps the process stable.
pub fn sample_poly_coeffs(n_lags: usize, decay: f64, spectral_target: f64, seed: u64) -> Result<PolyCoefficients> {
    if n_lags == 0 {
        return Err(CgpError::InvalidParameter("at least one lag is required".into()));
    }
    let mut rng = rng_for(seed, COEFF_STREAM);
    let mut c = PolyCoefficients::new(n_lags);
    let mut raw = Vec::new();
    for (lag, power) in c.free_indices() {
        let v = rng.random_range(-1.0..1.0) * decay.powi(lag as i32 - 1);
        raw.push((lag, power, v));
    }
    let load: f64 = raw
        .iter()
        .map(|(_, power, v)| v.abs() * spectral_target.powi(*power as i32))
        .sum();
    let budget = 0.9 * (1.0 - spectral_target);
    let scale = if load > budget { budget / load } else { 1.0 };
    for (lag, power, v) in raw {
        c.set(lag, power, v * scale)?;
    }
    Ok(c)
}

/// A simulated ground-truth process.
#[derive(Debug, Clone)]
pub struct CgpInstance {
    pub a_true: AdjacencyMatrix,
    pub c_true: PolyCoefficients,
    pub x: TimeSeries,
    pub params: SbmParams,
    pub n_lags: usize,
    pub burn_in: usize,
}

impl CgpInstance {
    pub fn density(&self) -> f64 {
        self.a_true.density()
    }
}

/// Samples `A`, `C` and a length-`len` series with a 500-step burn-in.
pub fn generate_instance(params: &SbmParams, n_lags: usize, len: usize) -> Result<CgpInstance> {
    let a_true = sample_adjacency(params)?;
    let c_true = sample_poly_coeffs(n_lags, params.decay, params.spectral_target, params.seed)?;
    let mut noise_rng = rng_for(params.seed, NOISE_STREAM);
    let noise = NoiseSpec::new(params.noise_sigma, noise_rng.random())?;
    let x = simulate(&a_true, &c_true, len, DEFAULT_BURN_IN, noise).map_err(|e| CgpError::Seeded {
        seed: params.seed,
        source: Box::new(e),
    })?;
    Ok(CgpInstance {
        a_true,
        c_true,
        x,
        params: params.clone(),
        n_lags,
        burn_in: DEFAULT_BURN_IN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_detection() {
        let chain = ndarray::array![[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [0.0, 0.5, 0.0]];
        assert!(!has_cycle(&chain));
        let mut ring = chain.clone();
        ring[[0, 2]] = -0.4;
        assert!(has_cycle(&ring));
        assert!(!has_cycle(&Array2::zeros((4, 4))));
    }

    #[test]
    fn small_sparse_draws_keep_bounded_weights() {
        for seed in 0..20 {
            let p = SbmParams::with_density(20, 5, DEFAULT_DENSITY, seed).unwrap();
            let a = sample_adjacency(&p).unwrap();
            let top = a.weights().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(top < 10.0, "seed {seed}: {top}");
            assert!((spectral_radius(a.weights().view()) - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_probabilities_exhaust_attempts() {
        let mut p = SbmParams::with_density(20, 2, 0.02, 1).unwrap();
        p.p_in = 0.0;
        p.p_out = 0.0;
        assert!(matches!(sample_adjacency(&p), Err(CgpError::EmptyAdjacency { attempts: MAX_SAMPLING_ATTEMPTS })));
    }

    #[test]
    fn complete_single_cluster() {
        let mut p = SbmParams::with_density(6, 1, 0.02, 1).unwrap();
        p.p_in = 1.0;
        p.p_out = 0.0;
        let s = sample_support(&p).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(s.weights()[[i, j]] != 0.0, i != j);
            }
        }
    }

    #[test]
    fn expected_density_matches_request() {
        let p = SbmParams::with_density(200, 5, 0.021, 0).unwrap();
        assert!((p.expected_density() - 0.021).abs() < 1e-12);
        assert!((p.p_in / p.p_out - 5.0).abs() < 1e-12);
    }

    #[test]
    fn single_lag_coeffs_are_fixed_pair() {
        let c = sample_poly_coeffs(1, 0.5, 0.5, 3).unwrap();
        assert_eq!(c.lag(1), &[0.0, 1.0]);
        assert!(c.free_indices().is_empty());
    }

    #[test]
    fn vanishing_decay_kills_higher_lags() {
        let c = sample_poly_coeffs(4, 0.0, 0.5, 3).unwrap();
        for (l, j) in c.free_indices() {
            assert_eq!(c.get(l, j), 0.0);
        }
    }

    #[test]
    fn coefficient_budget_holds() {
        for seed in 0..20 {
            let c = sample_poly_coeffs(5, 0.9, 0.5, seed).unwrap();
            let load: f64 = c
                .free_indices()
                .into_iter()
                .map(|(l, j)| c.get(l, j).abs() * 0.5f64.powi(j as i32))
                .sum();
            assert!(load <= 0.45 + 1e-12);
        }
    }

    #[test]
    fn one_sample_series() {
        let p = SbmParams::with_density(30, 3, 0.05, 4).unwrap();
        let inst = generate_instance(&p, 2, 1).unwrap();
        assert_eq!(inst.x.n_samples(), 1);
    }
}
