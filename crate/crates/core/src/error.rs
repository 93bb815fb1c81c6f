use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed something out of contract (bad dimension, range, …).
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A validated quantity broke its invariant (signals a bug upstream).
    #[error("invariant violated: {0}")]
    Invariant(String),
    /// Numerical procedure failed to deliver a trustworthy result.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
    pub fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
