//! Error taxonomy shared by the library and the CLI.
//!
//! The three variants map onto the CLI's nonzero exit codes: configuration
//! problems (bad flags, invalid field combinations), data problems (corrupt
//! or truncated files, shape mismatches), and numerical failures (divergence,
//! non-finite values, singular systems).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or argument combination.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed, truncated, or inconsistent data.
    #[error("data error: {0}")]
    Data(String),

    /// Numerical failure: divergence, NaN/Inf, singular matrix.
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
