//! Rolling-window structure tracking and exponentially weighted realized variance.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CgpError, Result};
use crate::eval::PipelineOptions;
use crate::io::Transform;
use crate::model::TimeSeries;
use crate::select::auto_fit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceOptions {
    pub transform: Transform,
    /// Samples per fitted window.
    pub window_len: usize,
    /// Samples between consecutive window starts.
    pub step: usize,
    pub rv_decay: f64,
    pub rv_window: usize,
}

impl Default for PriceOptions {
    fn default() -> Self {
        Self {
            transform: Transform::LogReturn,
            window_len: 1040,
            step: 130,
            rv_decay: 0.99,
            rv_window: 40,
        }
    }
}

impl PriceOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rv_decay > 0.0 && self.rv_decay < 1.0) {
            return Err(CgpError::InvalidParameter(format!("rv_decay must lie in (0, 1), got {}", self.rv_decay)));
        }
        if self.window_len == 0 || self.step == 0 || self.rv_window == 0 {
            return Err(CgpError::InvalidParameter("window lengths and step must be positive".into()));
        }
        Ok(())
    }
}

/// Per-node variance estimates and their cross-sectional mean log.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedVariance {
    /// `N×K`; columns before `window − 1` are NaN.
    pub rv: Array2<f64>,
    /// Mean over nodes of `ln RV_i(k)`; `None` where undefined or non-finite.
    pub market_log_rv: Vec<Option<f64>>,
    pub first_defined: usize,
}

impl RealizedVariance {
    pub fn get(&self, node: usize, k: usize) -> Option<f64> {
        (k >= self.first_defined).then(|| self.rv[[node, k]])
    }
}

/// Normalized weights `decay^t / Σ decay^s` for `t = 0..window`.
pub fn rv_weights(decay: f64, window: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..window).map(|t| decay.powi(t as i32)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// `RV_i(k) = Σ_t w_t · x_i(k−t)²` over the trailing `window` returns.
pub fn realized_variance(x: &TimeSeries, decay: f64, window: usize) -> Result<RealizedVariance> {
    if !(decay > 0.0 && decay < 1.0) {
        return Err(CgpError::InvalidParameter(format!("decay must lie in (0, 1), got {decay}")));
    }
    let k_len = x.n_samples();
    if window == 0 || window > k_len {
        return Err(CgpError::InsufficientData {
            samples: k_len,
            lags: window,
        });
    }
    let w = rv_weights(decay, window);
    let v = x.values();
    let first = window - 1;
    let mut rv = Array2::from_elem((x.n_nodes(), k_len), f64::NAN);
    for i in 0..x.n_nodes() {
        let row = v.row(i);
        for k in first..k_len {
            rv[[i, k]] = w.iter().enumerate().map(|(t, wt)| wt * row[k - t] * row[k - t]).sum();
        }
    }
    let market_log_rv = (0..k_len)
        .map(|k| {
            if k < first || x.n_nodes() == 0 {
                return None;
            }
            let m = rv.column(k).iter().map(|r| r.ln()).sum::<f64>() / x.n_nodes() as f64;
            m.is_finite().then_some(m)
        })
        .collect();
    Ok(RealizedVariance {
        rv,
        market_log_rv,
        first_defined: first,
    })
}

/// One fitted window. Failed windows keep their bounds and the error text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingRow {
    pub window_start: usize,
    /// Last sample index inside the window.
    pub window_end: usize,
    /// Nonzero entries of `Â` as a percentage of `N²`.
    pub sparsity_pct: Option<f64>,
    pub lambda1: Option<f64>,
    pub market_log_rv: Option<f64>,
    pub error: Option<String>,
}

/// Window start indices `0, step, ...` with the whole window inside `len`.
pub fn window_starts(len: usize, window_len: usize, step: usize) -> Vec<usize> {
    if window_len > len || step == 0 {
        return Vec::new();
    }
    (0..=len - window_len).step_by(step).collect()
}

/// Fits the automatic-selection pipeline on each window of a return series.
pub fn rolling_analysis(
    x: &TimeSeries,
    n_lags: usize,
    price: &PriceOptions,
    pipeline: &PipelineOptions,
) -> Result<Vec<RollingRow>> {
    price.validate()?;
    let starts = window_starts(x.n_samples(), price.window_len, price.step);
    if starts.is_empty() {
        return Err(CgpError::InsufficientData {
            samples: x.n_samples(),
            lags: price.window_len,
        });
    }
    let rv = realized_variance(x, price.rv_decay, price.rv_window.min(x.n_samples()))?;
    let n2 = (x.n_nodes() * x.n_nodes()) as f64;
    let rows = starts
        .par_iter()
        .map(|&start| {
            let end = start + price.window_len - 1;
            let market_log_rv = rv.market_log_rv[end];
            let fitted = x
                .window(start, price.window_len)
                .and_then(|w| auto_fit(&w, n_lags, &pipeline.grid, &pipeline.sweep, pipeline.rule));
            match fitted {
                Ok(f) => RollingRow {
                    window_start: start,
                    window_end: end,
                    sparsity_pct: Some(100.0 * f.fit.a.edge_count() as f64 / n2),
                    lambda1: Some(f.selection.lambda1),
                    market_log_rv,
                    error: None,
                },
                Err(e) => RollingRow {
                    window_start: start,
                    window_end: end,
                    sparsity_pct: None,
                    lambda1: None,
                    market_log_rv,
                    error: Some(format!("{}: {e}", e.category())),
                },
            }
        })
        .collect();
    Ok(rows)
}
