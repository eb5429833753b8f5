use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    Invalid(String),

    #[error("unknown subsystem `{0}`")]
    UnknownSubsystem(String),

    #[error("index {index} out of range for dimension {dim} of size {size}")]
    IndexOutOfRange { index: usize, dim: usize, size: usize },

    #[error("initial point violates constraints by {violation:.3e}")]
    InfeasibleStart { violation: f64 },

    #[error("point has {got} entries, program has {expected} variables")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("partition error: {0}")]
    Partition(String),

    #[error("regression undefined: {0}")]
    Regression(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
