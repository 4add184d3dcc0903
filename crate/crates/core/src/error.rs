//! Error signals shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
///
/// The variants distinguish the signal classes callers are expected to
/// branch on: bad inputs, infinite KL divergence (a reference without full
/// support), boundary singularities of the KL gradient, and runtime
/// numerical divergence.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated (includes shape
    /// mismatches between strategies and games).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// KL(p || q) is +inf because q assigns zero mass where p does not.
    /// Deliberately distinct from `InvalidArgument`.
    #[error("infinite KL divergence: {0}")]
    InfiniteDivergence(String),

    /// A gradient was requested at a boundary point where the KL term is
    /// singular (some probability is exactly zero).
    #[error("boundary singularity: {0}")]
    BoundarySingularity(String),

    /// An iterative computation produced NaN/Inf and was aborted.
    #[error("numerical divergence: {0}")]
    Divergence(String),

    /// A replay pool that must be non-empty was empty.
    #[error("empty pool: {0}")]
    EmptyPool(String),

    /// I/O or parse failure on an external file.
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
