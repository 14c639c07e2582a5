//! Library error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building or running the numerics.
///
/// Variants mirror the failure categories of the public operations:
/// configuration and dimension checks at construction time, analytic class
/// violations, grid-resolution preconditions, and runtime convergence or
/// quadrature failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported dimension: {0} (only n = 1 and n = 2 are implemented)")]
    UnsupportedDimension(usize),

    #[error("ellipticity class violation: {0}")]
    ClassViolation(String),

    #[error("grid too coarse: {0}")]
    Resolution(String),

    #[error("unsupported exterior tail: {0}")]
    UnsupportedTail(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("incompatible grids: {0}")]
    IncompatibleGrid(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("non-monotone scheme: {0}")]
    Scheme(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("reduction failure: {0}")]
    Reduction(String),

    #[error("stencil error: {0}")]
    Stencil(String),

    #[error("empty family: {0}")]
    EmptyFamily(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        // serde_json's Display already carries line and column information.
        Error::Parse(e.to_string())
    }
}
