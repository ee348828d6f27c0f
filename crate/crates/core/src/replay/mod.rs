//! Log data model, JSONL reader/writer and the synthetic scenario generator.

mod generate;
mod log;
mod scenario;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::NoiseModel;
use crate::geometry::{CameraModel, Pose6D};
use crate::mapping::PriorMap;
use crate::recognition::FinalState;

pub use generate::{generate, pose_at, rddf_for, truth_map, Generated, HeadBox, HEAD_HALF_EXTENTS};
pub use log::{
    open_log, read_log, read_log_from, write_log, write_log_to, GtDetection, LogError, LogFrame,
    LogReader, LOG_FORMAT_VERSION,
};
pub use scenario::{
    ClutterModel, LidarModel, LocalizationNoise, Scenario, ScenarioError, ScenarioLight,
    ScheduleEntry, Waypoint,
};

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{0}")]
    Parse(String),
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, FileError> {
    let s = std::fs::read_to_string(path)?;
    serde_json::from_str(&s).map_err(|e| FileError::Parse(format!("{}: {e}", path.display())))
}

fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FileError> {
    let s = serde_json::to_string_pretty(value).map_err(|e| FileError::Parse(e.to_string()))?;
    std::fs::write(path, s + "\n")?;
    Ok(())
}

/// Road definition: the reference trajectory of a route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rddf {
    pub route_id: String,
    pub waypoints: Vec<Waypoint>,
}

impl Rddf {
    pub fn load(path: &Path) -> Result<Self, FileError> {
        load_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<(), FileError> {
        save_json(path, self)
    }
}

/// Per-frame ground truth beyond what the log carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFrame {
    pub t: f64,
    /// True vehicle pose (the log may carry a noisy one).
    pub pose: Pose6D,
    pub gt_state: FinalState,
    /// Active group under the true pose and map.
    pub group: Option<String>,
    /// Range to the nearest light of the active group, meters.
    pub distance: Option<f64>,
}

pub const TRUTH_FORMAT_VERSION: u32 = 1;

/// Ground truth written next to a simulated log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthBundle {
    pub version: u32,
    pub route_id: String,
    pub map: PriorMap,
    pub rddf: Rddf,
    pub frames: Vec<TruthFrame>,
}

impl TruthBundle {
    pub fn new(map: PriorMap, rddf: Rddf, frames: Vec<TruthFrame>) -> Self {
        Self {
            version: TRUTH_FORMAT_VERSION,
            route_id: map.route_id.clone(),
            map,
            rddf,
            frames,
        }
    }

    pub fn load(path: &Path) -> Result<Self, FileError> {
        let b: TruthBundle = load_json(path)?;
        if b.version != TRUTH_FORMAT_VERSION {
            return Err(FileError::VersionMismatch {
                found: b.version,
                expected: TRUTH_FORMAT_VERSION,
            });
        }
        Ok(b)
    }

    pub fn save(&self, path: &Path) -> Result<(), FileError> {
        save_json(path, self)
    }
}

/// Camera and detector settings shared by the offline and online tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sensors {
    #[serde(default = "CameraModel::default_vehicle_camera")]
    pub camera: CameraModel,
    #[serde(default)]
    pub detector: NoiseModel,
}

impl Default for Sensors {
    fn default() -> Self {
        Self {
            camera: CameraModel::default_vehicle_camera(),
            detector: NoiseModel::default(),
        }
    }
}

impl Sensors {
    pub fn of(scenario: &Scenario) -> Self {
        Self {
            camera: scenario.camera,
            detector: scenario.detector.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, FileError> {
        load_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<(), FileError> {
        save_json(path, self)
    }
}
