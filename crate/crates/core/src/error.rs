use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    /// Malformed file contents (bad magic, truncation, unsupported version).
    #[error("format error: {0}")]
    Format(String),
    /// Caller handed us arguments that cannot describe a valid computation.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Non-finite values or a divergent optimization state.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// An internal invariant was broken (e.g. unsorted splats reached the compositor).
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
