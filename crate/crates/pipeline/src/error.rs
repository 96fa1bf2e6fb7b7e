use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad command-line usage or an inconsistent request.
    #[error("usage: {0}")]
    Usage(String),

    /// Input data or configuration that fails validation.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: neopain_core::Error,
    },

    #[error(transparent)]
    Core(#[from] neopain_core::Error),

    #[error("{0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// A broken internal invariant.
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// Process exit code: 1 usage, 2 data or validation, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Internal(_) => 3,
            _ => 2,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

/// Tags a core error with the pipeline stage that raised it.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for std::result::Result<T, neopain_core::Error> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| Error::Stage { stage, source })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
