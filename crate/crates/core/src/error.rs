use std::path::PathBuf;

use thiserror::Error;

use crate::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("node {node} out of range (num_nodes = {num_nodes})")]
    NodeOutOfRange { node: NodeId, num_nodes: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("trace mismatch: {0}")]
    TraceMismatch(String),

    #[error("inconsistent changeset: {0}")]
    Changeset(String),

    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),

    #[error("{stage} stage failed ({census}): {source}")]
    Stage {
        stage: &'static str,
        census: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable kind, used by the CLI's one-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::NodeOutOfRange { .. } => "node_out_of_range",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::TraceMismatch(_) => "trace_mismatch",
            Error::Changeset(_) => "changeset",
            Error::TooLarge(_) => "too_large",
            Error::Stage { source, .. } => source.kind(),
        }
    }
}
