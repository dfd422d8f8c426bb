use thiserror::Error;

/// Errors raised by the clustering engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A model or prior parameter lies outside its domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Structurally invalid input (empty vectors, inconsistent counts, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Exhaustive enumeration was requested for a problem that is too large.
    #[error("refusing to enumerate: {0}")]
    TooLarge(String),
    /// A matrix that must be symmetric positive definite was not.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// An internal invariant was broken.
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
