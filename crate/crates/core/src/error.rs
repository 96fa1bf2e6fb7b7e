use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    /// A layer or architecture description is inconsistent with its input.
    #[error("configuration error in layer `{layer}`: {message}")]
    Config { layer: String, message: String },

    /// A tap or prediction request that cannot be served.
    #[error("request error: {0}")]
    Request(String),

    /// A binary file does not follow the expected container layout.
    #[error("format error: {0}")]
    Format(String),

    /// A weight or model file parsed correctly but disagrees with the architecture.
    #[error("validation error in layer `{layer}`: {message}")]
    Validation { layer: String, message: String },

    /// A precondition of an operation was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// An iterative trainer stopped before meeting its tolerance.
    #[error("training error: {0}")]
    Training(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(layer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            layer: layer.into(),
            message: message.into(),
        }
    }

    pub(crate) fn validation(layer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            layer: layer.into(),
            message: message.into(),
        }
    }

    pub(crate) fn contract(message: impl Into<String>) -> Self {
        Error::Contract(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
