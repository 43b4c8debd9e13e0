use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:.3e})")]
    NotPositiveSemidefinite { eigenvalue: f64 },

    #[error("covariance is not positive definite")]
    NotPositiveDefinite,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("schedule invariant violated: {0}")]
    Schedule(String),

    #[error("batch size must be at least 1")]
    EmptyBatch,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("non-finite iterate at k = {k}")]
    Diverged { k: usize },

    #[error("minimum value f* is unknown; solve a reference problem first")]
    MissingMinimum,

    #[error("true gradients are unavailable for this oracle")]
    MissingTrueGradient,

    #[error("problem is not quadratic")]
    NotQuadratic,

    #[error("not enough usable points for a fit: {usable} (need {required})")]
    InsufficientData { usable: usize, required: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
