use std::io;

use crate::types::VectorId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Caller violated a documented precondition.
    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed on-disk data.
    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("io error: {0}")]
    Io(#[from] io::Error),

    /// The requested recall could not be reached even when every partition was scanned.
    #[error("target recall {target} unreachable; best recall {best_recall:.4}")]
    UnreachableTarget { target: f64, best_recall: f64 },

    /// A pid referenced by an upper level has no partition in the level below.
    #[error("index corruption: partition {pid} missing from level {level}")]
    IndexCorruption { level: usize, pid: VectorId },

    #[error("protocol error: {0}")]
    Protocol(String),

    /// A store node replied with an ERROR frame.
    #[error("store error (code {code}): {message}")]
    Remote { code: u16, pid: Option<VectorId>, message: String },

    /// A store node could not be reached or timed out.
    #[error("store node {node} ({addr}) failed: {source}")]
    Node {
        node: usize,
        addr: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format { offset, message: msg.into() }
    }
}
