use thiserror::Error;

pub type Result<T> = std::result::Result<T, DsrError>;

#[derive(Debug, Error)]
pub enum DsrError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Malformed or inconsistent input data (files, volumes, masks).
    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DsrError {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        DsrError::DimensionMismatch(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        DsrError::InvalidArgument(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        DsrError::Data(msg.into())
    }
}
