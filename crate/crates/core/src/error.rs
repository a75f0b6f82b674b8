use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is singular beyond regularization")]
    Singular,

    #[error("target level must be positive, got {0}")]
    NonPositiveGamma(f64),

    #[error("fractional uncertainty ratio must lie in [0, 1), got {0}")]
    InvalidRatio(f64),

    #[error("SINR must be nonnegative, got {0}")]
    NegativeSinr(f64),

    #[error("at least {min} symbols are required, got {got}")]
    TooFewSymbols { min: usize, got: usize },

    #[error("channel estimate has zero norm but a positive uncertainty radius")]
    DegenerateChannel,

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            what,
            expected,
            got,
        }
    }
}
