use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Two operands live in different algebras, or a shape does not match
    /// the block structure.
    #[error("structural error: {0}")]
    Structural(String),

    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The channel or certificate is outside the classes this crate can handle.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A numerical procedure failed to settle.
    #[error("numerical instability: {0}")]
    Numerical(String),

    /// A map was used where a validated Markov map is required.
    #[error("not a Markov map: {0}")]
    InvalidMap(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn structural(msg: impl Into<String>) -> Error {
    Error::Structural(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
