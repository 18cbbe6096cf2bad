use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    /// Exhaustive work would exceed the configured cap.
    #[error("enumeration cap exceeded: {what} needs {needed}, cap is {cap}")]
    CapExceeded {
        what: &'static str,
        needed: u128,
        cap: u128,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The partition is not a well-formed tower of set partitions of `[n]`.
    #[error("structural error at level {level}: {reason}")]
    Structural { level: usize, reason: String },

    /// Divisibility condition on the immediacy function failed at this `j`.
    #[error("divisibility condition fails at j = {j}: {reason}")]
    Divisibility { j: usize, reason: String },

    #[error("code is not systematic at position {position}")]
    NotSystematic { position: usize },

    #[error("code violates the online property at position {position}")]
    NotOnline { position: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("refusing to audit: {0}")]
    RefusedUnverified(String),

    #[error("search failed: {0}")]
    SearchFailed(String),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
