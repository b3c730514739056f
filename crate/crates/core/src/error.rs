use thiserror::Error;

/// Errors raised by the toolkit.
///
/// The variants map one-to-one onto failure classes that callers (the CLI in
/// particular) need to tell apart.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Operand dimensions do not fit the operation.
    #[error("shape error: {0}")]
    Shape(String),
    /// A tensor product would exceed the configured dimension limit.
    #[error("size error: {0}")]
    Size(String),
    /// An object violates a validity condition (positivity, normalization, ...).
    #[error("validity error: {0}")]
    Validity(String),
    /// Objects living on different regions were combined.
    #[error("composition error: {0}")]
    Composition(String),
    /// Conditioning on an event that has zero probability.
    #[error("undefined conditional: {0}")]
    UndefinedConditional(String),
    /// An oracle failed the checks required before reconstruction.
    #[error("precondition failed: {0}")]
    Precondition(String),
    /// The reconstruction linear system is singular or fails held-out checks.
    #[error("reconstruction error: {0}")]
    Reconstruction(String),
}

pub type Result<T> = std::result::Result<T, Error>;
