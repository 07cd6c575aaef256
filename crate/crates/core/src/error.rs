//! Crate-wide error type.

/// Errors surfaced by the optimizer.
///
/// `InvalidInput` covers precondition violations (bad meshes, mismatched
/// resolutions, unknown tokens); `Numerical` covers mid-run aborts such as
/// diverging losses or NaN loss terms. The CLI maps the former to exit
/// code 1 and the latter to exit code 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical abort: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
