use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("component index {index} out of range for a problem with n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("component {index} returned a non-finite gradient")]
    NonFiniteGradient { index: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("estimator used before it was initialized")]
    Uninitialized,

    #[error("estimator epoch exhausted: refresh required after {0} recursive steps")]
    EpochExhausted(usize),

    #[error("non-finite iterate at step {step}")]
    Diverged { step: u64 },

    #[error("sub-solver diverged in outer iteration {outer} (inner step {step})")]
    SubsolverDiverged { outer: usize, step: u64 },

    #[error("reference unavailable: {0}")]
    ReferenceUnavailable(String),

    #[error("unbounded inner max: projection residual {residual:.3e} exceeds tolerance")]
    UnboundedInnerMax { residual: f64 },

    #[error("metric unavailable: {0}")]
    MetricUnavailable(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
