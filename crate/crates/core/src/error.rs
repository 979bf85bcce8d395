use thiserror::Error;

/// Errors raised across the detection stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("non-finite value at tick {t}, sensor {sensor}")]
    NonFinite { t: i64, sensor: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("stream order violated: tick {got} after {last}")]
    StreamOrder { last: i64, got: i64 },

    #[error("gap in stream: expected tick {expected}, got {got}")]
    StreamGap { expected: i64, got: i64 },

    #[error("insufficient lookahead: tick {needed} for sensor {sensor} is not buffered")]
    InsufficientLookahead { sensor: usize, needed: i64 },

    #[error("empty window")]
    EmptyWindow,

    #[error("zero matrix has no leading direction")]
    ZeroMatrix,

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("subspace estimate window [{window_start}, ..] overlaps tick {t}")]
    ContractViolation { t: i64, window_start: i64 },

    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidParameter(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Self::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
