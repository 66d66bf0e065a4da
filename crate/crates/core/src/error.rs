use thiserror::Error;

/// Errors raised while building, discretizing or running the thermal models.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid geometry, grid, channel mapping or other user-supplied setup.
    #[error("configuration error: {0}")]
    Config(String),
    /// Boundary conditions or network topology that cannot be assembled.
    #[error("assembly error: {0}")]
    Assembly(String),
    /// Malformed or inconsistent time series data.
    #[error("data error: {0}")]
    Data(String),
    /// Singular systems, non-finite values, failed convergence.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Observer design failed (detectability, Riccati divergence).
    #[error("observer design error: {0}")]
    Design(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn numeric(msg: impl Into<String>) -> Error {
    Error::Numeric(msg.into())
}
