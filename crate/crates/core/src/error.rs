use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed container or record syntax.
    #[error("format error: {0}")]
    Format(String),

    /// Well-formed input in a variant this crate does not handle.
    #[error("unsupported format: {0}")]
    Unsupported(String),

    /// Caller violated an operation precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Iterative numerics produced a non-finite value.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A model was applied to data it was not fitted on.
    #[error("provenance mismatch: {0}")]
    Provenance(String),

    /// Within-class scatter not invertible; caller should truncate PCA harder.
    #[error("singular scatter matrix: {0}")]
    SingularScatter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
