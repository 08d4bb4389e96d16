use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CgpError> = std::result::Result<T, E>;

/// Failures raised anywhere in the structure-learning toolkit.
#[derive(Debug, Error)]
pub enum CgpError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("non-finite value in {context} at ({row}, {col})")]
    NonFinite {
        context: &'static str,
        row: usize,
        col: usize,
    },

    #[error("insufficient data: {samples} samples cannot support {lags} lags")]
    InsufficientData { samples: usize, lags: usize },

    #[error("index {index} out of range [{min}, {max}] for {context}")]
    OutOfRange {
        context: &'static str,
        index: usize,
        min: usize,
        max: usize,
    },

    #[error("process diverged at step {step}: |x| = {value:e} exceeds the overflow guard")]
    Instability { step: usize, value: f64 },

    #[error("simulation for seed {seed} failed: {source}")]
    Seeded {
        seed: u64,
        #[source]
        source: Box<CgpError>,
    },

    #[error("gram matrix for lag {lag} is singular with ridge {ridge:e}")]
    SingularGram { lag: usize, ridge: f64 },

    #[error("sampled adjacency matrix was empty after {attempts} attempts")]
    EmptyAdjacency { attempts: usize },

    #[error("no metric produced a usable peak: {0}; widen the lambda grid")]
    SelectionFailure(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed csv at row {row}, column {col}: {message}")]
    Csv {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("benchmark failed: {failed} of {total} seeds errored")]
    Benchmark { failed: usize, total: usize },

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl CgpError {
    /// Short machine-parsable category, stable across releases.
    pub fn category(&self) -> &'static str {
        match self {
            CgpError::DimensionMismatch { .. } | CgpError::InvalidParameter(_) => "invalid_input",
            CgpError::NonFinite { .. } | CgpError::Csv { .. } => "bad_data",
            CgpError::InsufficientData { .. } | CgpError::OutOfRange { .. } => "insufficient_data",
            CgpError::Instability { .. } => "instability",
            CgpError::Seeded { source, .. } => source.category(),
            CgpError::SingularGram { .. } => "singular",
            CgpError::EmptyAdjacency { .. } => "sampling_failure",
            CgpError::SelectionFailure(_) => "selection_failure",
            CgpError::Benchmark { .. } => "benchmark_failure",
            CgpError::Io { .. } | CgpError::Json { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CgpError::Io {
            path: path.into(),
            source,
        }
    }
}
