use thiserror::Error;

/// Errors shared across the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grouping: {0}")]
    InvalidGrouping(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("objective has no usable prox implementation: {0}")]
    UnsupportedObjective(String),

    #[error("objective is not strongly convex (mu = {mu}); rule `{rule}` requires mu > 0")]
    NotStronglyConvex { rule: String, mu: f64 },

    #[error("degenerate regularizer: {0}")]
    DegenerateTau(String),

    #[error(
        "spectral norm estimation did not converge within {iters} iterations \
         (best estimate {best:.6e}, last relative change {last_change:.3e})"
    )]
    SpectralEstimationFailed {
        best: f64,
        iters: usize,
        last_change: f64,
    },

    #[error("G-metric evaluated to {value:.3e} < 0; regularizers are not positive semidefinite")]
    MetricViolation { value: f64 },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed problem file {path}: {reason}")]
    Parse { path: String, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
