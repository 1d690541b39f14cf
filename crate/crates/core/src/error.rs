use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("numeric error in `{name}`: {detail}")]
    Numeric { name: String, detail: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("unknown agent id {0}")]
    UnknownAgent(usize),

    #[error("unknown category `{value}` for feature `{feature}`")]
    UnknownCategory { feature: String, value: String },

    #[error("decode error: {0}")]
    Decode(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("checksum mismatch for {0}")]
    Checksum(PathBuf),

    #[error("output directory {0} is locked by another run (remove the lock file if that run is dead)")]
    Locked(PathBuf),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
