use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("non-finite value in input")]
    NonFinite,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dense size {size} exceeds cap {cap}; use the matrix-free operator")]
    TooLarge { size: usize, cap: usize },

    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },

    #[error("eigensolver did not converge after {iterations} block steps (residuals {residuals:?})")]
    NoConvergence { iterations: usize, residuals: Vec<f64> },

    #[error("cannot form {clusters} clusters from {points} points")]
    TooFewPoints { points: usize, clusters: usize },

    #[error("ground truth is not available")]
    MissingTruth,

    #[error("empty result cell: {0}")]
    EmptyCell(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
