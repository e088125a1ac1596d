//! Crate-wide error type.

/// Errors raised by model construction, proxy computation and the
/// experiment drivers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter violates its documented constraint.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// An input lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A rank or index is out of range.
    #[error("range error: {0}")]
    Range(String),
    /// A stated precondition of a closed-form bound does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// A configuration document is malformed.
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn range(msg: impl Into<String>) -> Self {
        Error::Range(msg.into())
    }
}
