use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Hurst parameter {0} outside the open interval (1/2, 1)")]
    InvalidHurst(f64),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("phi kernel is singular on the diagonal (s = t = {0})")]
    DiagonalSingularity(f64),

    #[error("step functions live on different grids")]
    GridMismatch,

    #[error("degenerate seed family: element {index} is numerically dependent on its predecessors")]
    DegenerateFamily { index: usize },

    #[error("requested {requested} basis vectors from {available} seeds")]
    NotEnoughSeeds { requested: usize, available: usize },

    #[error("covariance factorization failed even with jitter {max_jitter:e}")]
    IllConditionedFrame { max_jitter: f64 },

    #[error("coupled drift with {steps} steps exceeds the complexity guard ({limit}); estimated memo nodes {estimated_nodes}")]
    ComplexityGuard {
        steps: usize,
        limit: usize,
        estimated_nodes: f64,
    },

    #[error("drift audit failed: {0}")]
    DriftAudit(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("time {0} is not a point of the basis grid")]
    OffGrid(f64),

    #[error("Hölder exponents inconsistent: 1/p1 + 1/p2 = {sum} but 1/p = {target} (p={p}, p1={p1}, p2={p2})")]
    ExponentInconsistency {
        p: f64,
        p1: f64,
        p2: f64,
        sum: f64,
        target: f64,
    },

    #[error("conditional expectation estimator undersampled: {per_bin} samples per bin (< {min})")]
    EstimatorUndersampled { per_bin: usize, min: usize },

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("malformed basis csv: {0}")]
    BasisCsv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
