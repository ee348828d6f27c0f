use std::fmt::Display;

use tlr_core::detection::DetectionError;
use tlr_core::mapping::MappingError;
use tlr_core::recognition::RunError;
use tlr_curation::CurationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 2,
    Data = 3,
    Service = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ExitKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ExitKind::Usage, message)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches an exit kind and a short description of what was being done.
pub trait Context<T> {
    fn data(self, what: impl Display) -> CliResult<T>;
    fn service(self, what: impl Display) -> CliResult<T>;
}

impl<T, E: Display> Context<T> for Result<T, E> {
    fn data(self, what: impl Display) -> CliResult<T> {
        self.map_err(|e| CliError::new(ExitKind::Data, format!("{what}: {e}")))
    }

    fn service(self, what: impl Display) -> CliResult<T> {
        self.map_err(|e| CliError::new(ExitKind::Service, format!("{what}: {e}")))
    }
}

pub fn detection_kind(e: &DetectionError) -> ExitKind {
    match e {
        DetectionError::DetectorUnavailable(_) => ExitKind::Service,
        _ => ExitKind::Data,
    }
}

pub fn from_detection(what: impl Display, e: DetectionError) -> CliError {
    CliError::new(detection_kind(&e), format!("{what}: {e}"))
}

pub fn from_mapping(what: impl Display, e: MappingError) -> CliError {
    let kind = match &e {
        MappingError::Detection(d) => detection_kind(d),
        MappingError::InvalidConfig(_) => ExitKind::Usage,
        _ => ExitKind::Data,
    };
    CliError::new(kind, format!("{what}: {e}"))
}

pub fn from_run(what: impl Display, e: RunError) -> CliError {
    let kind = match &e {
        RunError::Detector { source, .. } => detection_kind(source),
        RunError::Config(_) => ExitKind::Usage,
    };
    CliError::new(kind, format!("{what}: {e}"))
}

pub fn from_curation(what: impl Display, e: CurationError) -> CliError {
    let kind = match &e {
        CurationError::SessionLocked(_) => ExitKind::Service,
        _ => ExitKind::Data,
    };
    CliError::new(kind, format!("{what}: {e}"))
}
