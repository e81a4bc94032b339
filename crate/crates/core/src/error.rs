use thiserror::Error;

/// Errors raised anywhere in the motion tokenizer pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Two extents disagree along a named axis.
    #[error("dimension mismatch on axis {axis}: expected {expected}, got {actual}")]
    Dimension {
        axis: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid state: {0}")]
    State(String),

    /// Well-formed input whose contents violate a domain constraint.
    #[error("invalid data: {0}")]
    Data(String),

    /// Model or training configuration that cannot be realised.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A NaN or infinity reached a place where only finite values may live.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Bad magic, truncated payload or malformed header in a binary artifact.
    #[error("corrupt artifact: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(axis: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            axis: axis.into(),
            expected,
            actual,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
