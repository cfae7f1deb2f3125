use thiserror::Error;

/// Crate-wide error type.
///
/// `Validation` covers contract violations on inputs, `Ingestion` covers file
/// parsing, and `Numeric` covers runtime numerical failures (divergence,
/// underflow, refused computations).
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("ingestion error in {path}: {message}")]
    Ingestion { path: String, message: String },

    #[error("numeric error: {0}")]
    Numeric(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn ingestion(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Ingestion {
            path: path.into(),
            message: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
