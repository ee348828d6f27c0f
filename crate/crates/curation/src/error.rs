use std::path::PathBuf;

use thiserror::Error;
use tlr_core::mapping::MappingError;

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("unknown candidate {0}")]
    UnknownCandidate(String),
    #[error("invalid group: {0}")]
    InvalidGroup(String),
    #[error("no frame at t={0}")]
    FrameNotFound(String),
    #[error("point index {index} out of range (frame has {len} points)")]
    PointIndexOutOfRange { index: usize, len: usize },
    #[error("{0} candidates are still pending; save with force to drop them")]
    PendingRemain(usize),
    #[error("map is already being edited (lock file {0} exists)")]
    SessionLocked(PathBuf),
    #[error("journal line {line}: {message}")]
    Journal { line: usize, message: String },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CurationError {
    /// Stable machine-readable code used in API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            CurationError::UnknownCandidate(_) => "UnknownCandidate",
            CurationError::InvalidGroup(_) => "InvalidGroup",
            CurationError::FrameNotFound(_) => "FrameNotFound",
            CurationError::PointIndexOutOfRange { .. } => "PointIndexOutOfRange",
            CurationError::PendingRemain(_) => "PendingRemain",
            CurationError::SessionLocked(_) => "SessionLocked",
            CurationError::Journal { .. } => "JournalCorrupt",
            CurationError::NotFound(_) => "NotFound",
            CurationError::BadRequest(_) => "BadRequest",
            CurationError::Mapping(_) => "MappingError",
            CurationError::Io(_) => "IoError",
        }
    }
}
