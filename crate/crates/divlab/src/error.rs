use thiserror::Error;

/// Errors raised by the library.
///
/// The variants follow the failure classes used throughout the crate:
/// bad arguments, inputs that exceed an exhaustive-enumeration or dense
/// budget, structural validation failures, and violated hypotheses of a
/// lemma being exercised.
#[derive(Debug, Error)]
pub enum DivlabError {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    /// A post-condition that is verified numerically did not hold.
    /// `witness` carries a vector demonstrating the failure, for example a
    /// Rayleigh vector whose quotient exceeds the requested threshold.
    #[error("verification failed: {message}")]
    Verification { message: String, witness: Vec<f64> },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DivlabError>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(DivlabError::Parameter(msg.into()))
}

pub(crate) fn capacity<T>(msg: impl Into<String>) -> Result<T> {
    Err(DivlabError::Capacity(msg.into()))
}

pub(crate) fn validation<T>(msg: impl Into<String>) -> Result<T> {
    Err(DivlabError::Validation(msg.into()))
}

pub(crate) fn hypothesis<T>(msg: impl Into<String>) -> Result<T> {
    Err(DivlabError::Hypothesis(msg.into()))
}
