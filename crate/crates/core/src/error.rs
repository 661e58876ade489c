use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt dataset file {file}: {reason}")]
    CorruptDataset { file: PathBuf, reason: String },

    #[error("corrupt parameter file {file}: {reason}")]
    CorruptCheckpoint { file: PathBuf, reason: String },

    #[error("unsupported format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("image encoding failed: {0}")]
    Encode(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by damaged or inconsistent stored data.
    pub fn is_integrity_failure(&self) -> bool {
        matches!(
            self,
            Error::CorruptDataset { .. }
                | Error::CorruptCheckpoint { .. }
                | Error::UnsupportedVersion { .. }
                | Error::CheckpointMismatch(_)
                | Error::Json { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
