use thiserror::Error;

use crate::wire::{ErrorCode, WireError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("out of range: {0}")]
    Range(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("not found: {0}")]
    NotFound(String),

    /// The requested node is not part of the provider's current cover.
    #[error("no entry: {0}")]
    NoEntry(String),

    /// Client-local: the user's access period ended before the current one.
    #[error("access rights for t{t_user} expired (current period t{t_curr})")]
    Revoked { t_user: u64, t_curr: u64 },

    #[error("stale period: {0}")]
    StalePeriod(String),

    #[error("upstream error: {0}")]
    Upstream(String),

    /// AEAD authentication failed: wrong key, wrong tag, or tampered bytes.
    #[error("decryption failed: ciphertext did not authenticate")]
    Decrypt,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn code(&self) -> ErrorCode {
        match self {
            Error::Range(_) | Error::Validation(_) | Error::Decrypt => ErrorCode::Validation,
            Error::NotFound(_) => ErrorCode::NotFound,
            Error::NoEntry(_) => ErrorCode::NoEntry,
            Error::Revoked { .. } => ErrorCode::Revoked,
            Error::StalePeriod(_) => ErrorCode::StalePeriod,
            Error::Upstream(_) | Error::Io(_) => ErrorCode::UpstreamError,
        }
    }
}

impl From<WireError> for Error {
    fn from(e: WireError) -> Self {
        match e.code {
            ErrorCode::NotFound => Error::NotFound(e.message),
            ErrorCode::NoEntry => Error::NoEntry(e.message),
            ErrorCode::StalePeriod => Error::StalePeriod(e.message),
            ErrorCode::UpstreamError => Error::Upstream(e.message),
            ErrorCode::Validation => Error::Validation(e.message),
            // REVOKED is decided on the client and never sent by a server.
            ErrorCode::Revoked => {
                Error::Validation(format!("peer sent client-local code REVOKED: {}", e.message))
            }
        }
    }
}

impl From<&Error> for WireError {
    fn from(e: &Error) -> Self {
        WireError {
            code: e.code(),
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Validation(e.to_string())
    }
}
