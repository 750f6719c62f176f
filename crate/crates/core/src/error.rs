use std::path::PathBuf;

/// Errors raised across the solver, the problem packs and the harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shape, symmetry, support).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A step-size or experiment parameter is out of its admissible range.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("matrix is numerically singular (pivot {pivot:e} at column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("non-finite value at iteration {k}: {what}")]
    NonFinite { k: u64, what: String },

    #[error("controller is not stabilizing")]
    Unstable,

    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("metric value {value} at k={k} is not strictly positive")]
    NonPositiveMetric { k: u64, value: f64 },

    #[error("all {runs} replicas failed; first failure: {first}")]
    AllReplicasFailed { runs: usize, first: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Whether the error reflects a numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::NotPositiveDefinite
                | Error::NonFinite { .. }
                | Error::Unstable
                | Error::NonConvergence { .. }
                | Error::NonPositiveMetric { .. }
                | Error::AllReplicasFailed { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
