use thiserror::Error;

#[derive(Debug, Error)]
pub enum IsacError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("numerical failure (trial seed {seed}): {message}")]
    Numerical { seed: u64, message: String },
    #[error("unreliable estimate: {0}")]
    Unreliable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, IsacError>;

pub(crate) fn invalid(msg: impl Into<String>) -> IsacError {
    IsacError::InvalidParameter(msg.into())
}
