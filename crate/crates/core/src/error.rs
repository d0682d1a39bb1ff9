use thiserror::Error;

/// Errors raised across the occlusion-inference pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cell ({row}, {col}) is outside a {height}x{width} grid")]
    OutOfBounds {
        row: i64,
        col: i64,
        height: usize,
        width: usize,
    },
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("invalid belief mass: {0}")]
    InvalidMass(String),
    #[error("total conflict between {left} and {right}")]
    TotalConflict { left: String, right: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("agent {agent}: timestamps not strictly increasing at frame {frame}")]
    NonMonotoneTimestamps { agent: i64, frame: i64 },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("model has not been fitted")]
    Unfitted,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("training diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        /// Total loss of every completed iteration.
        trace: Vec<f64>,
    },
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
