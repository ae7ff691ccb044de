use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed or inconsistent input.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// An exhaustive operation would exceed the configured enumeration cap.
    #[error("enumeration cap exceeded: {0}")]
    Cap(String),

    #[error("operands live on different spaces")]
    SpaceMismatch,

    /// The folding normalizer vanished, so the folded measure is undefined.
    #[error("degenerate folding: {0}")]
    DegenerateFolding(String),

    #[error("singular normalization: {0}")]
    SingularNormalization(String),

    #[error("fold parameter fit failed: {0}")]
    FitFailed(String),
}

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
