use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular system at w = {re}{im:+}i")]
    Singular { re: f64, im: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A documented mathematical refusal: the requested quantity is not
    /// strongly convergent under the stated data regularity.
    #[error("refused: {0}")]
    Refused(String),

    /// Argument outside the validated accuracy domain of a special function.
    #[error("outside accuracy domain: {0}")]
    AccuracyDomain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
