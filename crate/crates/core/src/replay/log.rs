use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::StateClass;
use crate::geometry::{BoundingBox, Pose6D, Vec3};
use crate::recognition::FinalState;

pub const LOG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported log version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("line {line}: timestamp {t} does not increase")]
    NonMonotonic { line: usize, t: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LogError {
    pub fn line(&self) -> Option<usize> {
        match self {
            LogError::Parse { line, .. } | LogError::NonMonotonic { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// Annotated light head as seen by the camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtDetection {
    pub bbox: BoundingBox,
    pub class: StateClass,
    pub light: String,
}

/// One timestamped sensor snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FrameRepr", into = "FrameRepr")]
pub struct LogFrame {
    /// seconds
    pub t: f64,
    /// Logged (possibly noisy) vehicle pose.
    pub pose: Pose6D,
    /// Vehicle frame, meters.
    pub lidar: Vec<Vec3>,
    pub gt_detections: Vec<GtDetection>,
    pub gt_state: FinalState,
    pub image_ref: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRepr {
    t: f64,
    pose: Pose6D,
    lidar: Vec<f64>,
    #[serde(default)]
    gt_detections: Vec<GtDetection>,
    gt_state: FinalState,
    #[serde(default)]
    image_ref: Option<String>,
}

impl TryFrom<FrameRepr> for LogFrame {
    type Error = String;

    fn try_from(r: FrameRepr) -> Result<Self, Self::Error> {
        if !r.t.is_finite() {
            return Err("non-finite timestamp".into());
        }
        if r.lidar.len() % 3 != 0 {
            return Err(format!(
                "lidar array length {} is not a multiple of 3",
                r.lidar.len()
            ));
        }
        if r.lidar.iter().any(|v| !v.is_finite()) {
            return Err("non-finite lidar coordinate".into());
        }
        Ok(LogFrame {
            t: r.t,
            pose: r.pose,
            lidar: r
                .lidar
                .chunks_exact(3)
                .map(|c| Vec3::new(c[0], c[1], c[2]))
                .collect(),
            gt_detections: r.gt_detections,
            gt_state: r.gt_state,
            image_ref: r.image_ref,
        })
    }
}

impl From<LogFrame> for FrameRepr {
    fn from(f: LogFrame) -> Self {
        FrameRepr {
            t: f.t,
            pose: f.pose,
            lidar: f.lidar.iter().flat_map(|p| [p.x, p.y, p.z]).collect(),
            gt_detections: f.gt_detections,
            gt_state: f.gt_state,
            image_ref: f.image_ref,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    tlr_log: u32,
}

/// Streams frames from a JSONL log. An optional first line
/// `{"tlr_log": <version>}` carries the format version. Blank lines are
/// skipped; errors carry 1-based physical line numbers.
pub struct LogReader<R> {
    lines: std::io::Lines<R>,
    line: usize,
    last_t: Option<f64>,
}

impl<R: BufRead> LogReader<R> {
    pub fn new(input: R) -> Self {
        Self {
            lines: input.lines(),
            line: 0,
            last_t: None,
        }
    }

    fn next_frame(&mut self) -> Option<Result<LogFrame, LogError>> {
        loop {
            let text = match self.lines.next()? {
                Ok(s) => s,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            let trimmed = text.trim();
            if trimmed.is_empty() {
                continue;
            }
            if self.line == 1 && trimmed.contains("\"tlr_log\"") {
                match serde_json::from_str::<Header>(trimmed) {
                    Ok(h) if h.tlr_log == LOG_FORMAT_VERSION => continue,
                    Ok(h) => {
                        return Some(Err(LogError::VersionMismatch {
                            found: h.tlr_log,
                            expected: LOG_FORMAT_VERSION,
                        }))
                    }
                    Err(e) => {
                        return Some(Err(LogError::Parse {
                            line: self.line,
                            message: e.to_string(),
                        }))
                    }
                }
            }
            let frame: LogFrame = match serde_json::from_str(trimmed) {
                Ok(f) => f,
                Err(e) => {
                    return Some(Err(LogError::Parse {
                        line: self.line,
                        message: e.to_string(),
                    }))
                }
            };
            if let Some(prev) = self.last_t {
                if frame.t <= prev {
                    return Some(Err(LogError::NonMonotonic {
                        line: self.line,
                        t: frame.t,
                    }));
                }
            }
            self.last_t = Some(frame.t);
            return Some(Ok(frame));
        }
    }
}

impl<R: BufRead> Iterator for LogReader<R> {
    type Item = Result<LogFrame, LogError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame()
    }
}

pub fn open_log(path: &Path) -> Result<LogReader<BufReader<File>>, LogError> {
    Ok(LogReader::new(BufReader::new(File::open(path)?)))
}

pub fn read_log_from<R: Read>(input: R) -> Result<Vec<LogFrame>, LogError> {
    LogReader::new(BufReader::new(input)).collect()
}

pub fn read_log(path: &Path) -> Result<Vec<LogFrame>, LogError> {
    open_log(path)?.collect()
}

/// Writes the version header followed by one frame per line.
pub fn write_log_to<W: Write>(out: W, frames: &[LogFrame]) -> Result<(), LogError> {
    let mut w = BufWriter::new(out);
    serde_json::to_writer(
        &mut w,
        &Header {
            tlr_log: LOG_FORMAT_VERSION,
        },
    )
    .map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    for f in frames {
        serde_json::to_writer(&mut w, f).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_log(path: &Path, frames: &[LogFrame]) -> Result<(), LogError> {
    write_log_to(File::create(path)?, frames)
}
