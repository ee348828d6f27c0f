//! Online phase: pick the relevant light group, project it into the image and
//! use it to gate and select one detector box per frame.

use std::cmp::Ordering;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{filter_by_confidence, Detection, DetectionError, Detector, StateClass};
use crate::geometry::{pixel_gate_radius, CameraModel, PixelPoint, Pose6D};
use crate::mapping::PriorMap;
use crate::replay::LogFrame;

/// Per-frame system output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinalState {
    /// No relevant light group in range.
    None,
    /// A group is in range but no detection survived gating.
    Off,
    Red,
    Green,
}

impl FinalState {
    pub const ALL: [FinalState; 4] = [
        FinalState::None,
        FinalState::Red,
        FinalState::Green,
        FinalState::Off,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FinalState::None => "none",
            FinalState::Off => "off",
            FinalState::Red => "red",
            FinalState::Green => "green",
        }
    }

    pub fn advisory(&self) -> Advisory {
        match self {
            FinalState::Green => Advisory::Proceed,
            FinalState::Red | FinalState::Off => Advisory::SlowStop,
            FinalState::None => Advisory::NoConstraint,
        }
    }
}

impl From<StateClass> for FinalState {
    fn from(c: StateClass) -> Self {
        match c {
            StateClass::Red => FinalState::Red,
            StateClass::Green => FinalState::Green,
        }
    }
}

impl fmt::Display for FinalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Advisory {
    Proceed,
    SlowStop,
    NoConstraint,
}

/// How "within range" is measured from the vehicle to a mapped light.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeMetric {
    /// 3D straight-line distance.
    #[default]
    Euclidean,
    /// Distance in the ground plane, ignoring height.
    Planar,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid recognizer config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecognizerConfig {
    /// meters
    pub activation_range: f64,
    /// meters; radius of the sphere projected around each mapped light
    pub gate_radius: f64,
    pub tau: f64,
    pub range_metric: RangeMetric,
}

impl Default for RecognizerConfig {
    fn default() -> Self {
        Self {
            activation_range: 100.0,
            gate_radius: 1.5,
            tau: 0.5,
            range_metric: RangeMetric::Euclidean,
        }
    }
}

impl RecognizerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.activation_range > 0.0) {
            return Err(ConfigError::Invalid("activation_range must be > 0".into()));
        }
        if !(self.gate_radius > 0.0) {
            return Err(ConfigError::Invalid("gate_radius must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(ConfigError::Invalid("tau must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// The group currently governing the vehicle and its nearest member.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveGroup {
    pub group_id: String,
    pub nearest_light: String,
    /// Distance to the nearest ahead member, per the configured metric.
    pub distance: f64,
}

fn range_to(pose: &Pose6D, p: &crate::geometry::Vec3, metric: RangeMetric) -> f64 {
    let d = p - pose.position;
    match metric {
        RangeMetric::Euclidean => d.norm(),
        RangeMetric::Planar => d.x.hypot(d.y),
    }
}

/// Nearest group with a member ahead of the vehicle and within the
/// activation range. Members behind the vehicle (negative longitudinal
/// coordinate) are ignored, so a group deactivates once all of it is passed.
/// Ties go to the lexicographically smaller group id.
pub fn active_group(pose: &Pose6D, map: &PriorMap, cfg: &RecognizerConfig) -> Option<ActiveGroup> {
    let forward = pose.forward();
    let mut best: Option<ActiveGroup> = None;
    for group in &map.groups {
        let nearest = group
            .light_ids
            .iter()
            .filter_map(|id| map.light(id))
            .filter(|l| (l.position - pose.position).dot(&forward) > 0.0)
            .map(|l| (l, range_to(pose, &l.position, cfg.range_metric)))
            .filter(|(_, d)| *d <= cfg.activation_range)
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal));
        let Some((light, distance)) = nearest else {
            continue;
        };
        let better = match &best {
            None => true,
            Some(b) => distance < b.distance || (distance == b.distance && group.id < b.group_id),
        };
        if better {
            best = Some(ActiveGroup {
                group_id: group.id.clone(),
                nearest_light: light.id.clone(),
                distance,
            });
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedLight {
    pub light_id: String,
    pub pixel: PixelPoint,
    /// px
    pub gate_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameVerdict {
    pub state: FinalState,
    pub selected_detection: Option<Detection>,
    pub active_group: Option<String>,
    pub projected_lights: Vec<ProjectedLight>,
    pub advisory: Advisory,
}

impl FrameVerdict {
    fn none() -> Self {
        Self {
            state: FinalState::None,
            selected_detection: None,
            active_group: None,
            projected_lights: Vec::new(),
            advisory: Advisory::NoConstraint,
        }
    }
}

/// Projects every visible member of `group_id` with its pixel gate radius.
pub fn project_group(
    pose: &Pose6D,
    map: &PriorMap,
    group_id: &str,
    cam: &CameraModel,
    gate_radius: f64,
) -> Vec<ProjectedLight> {
    let Some(group) = map.group(group_id) else {
        return Vec::new();
    };
    let world_to_cam = cam.world_to_camera(pose);
    group
        .light_ids
        .iter()
        .filter_map(|id| map.light(id))
        .filter_map(|light| {
            let pixel = cam.project(&world_to_cam.transform_point(&light.position))?;
            let gate_radius = pixel_gate_radius(cam, pixel.depth, gate_radius).ok()?;
            Some(ProjectedLight {
                light_id: light.id.clone(),
                pixel,
                gate_radius,
            })
        })
        .collect()
}

/// Pixel distance from `det`'s box center to the closest projected light,
/// and whether the center lies inside at least one gate circle.
fn gate_distance(det: &Detection, projected: &[ProjectedLight]) -> (f64, bool) {
    let (cu, cv) = det.bbox.center();
    let mut nearest = f64::INFINITY;
    let mut inside = false;
    for p in projected {
        let d = p.pixel.distance_to(cu, cv);
        nearest = nearest.min(d);
        inside |= d <= p.gate_radius;
    }
    (nearest, inside)
}

/// Online decision for one frame. `dets` are expected to be τ-filtered.
pub fn recognize_frame(
    frame: &LogFrame,
    dets: &[Detection],
    map: &PriorMap,
    cam: &CameraModel,
    cfg: &RecognizerConfig,
) -> FrameVerdict {
    let Some(active) = active_group(&frame.pose, map, cfg) else {
        return FrameVerdict::none();
    };
    let projected = project_group(&frame.pose, map, &active.group_id, cam, cfg.gate_radius);

    let selected = dets
        .iter()
        .filter_map(|d| {
            let (dist, inside) = gate_distance(d, &projected);
            inside.then_some((d, dist))
        })
        .min_by(|(a, da), (b, db)| {
            da.partial_cmp(db)
                .unwrap_or(Ordering::Equal)
                .then_with(|| {
                    b.confidence
                        .partial_cmp(&a.confidence)
                        .unwrap_or(Ordering::Equal)
                })
                .then_with(|| a.class.cmp(&b.class))
        })
        .map(|(d, _)| *d);

    let state = selected.map_or(FinalState::Off, |d| d.class.into());
    FrameVerdict {
        state,
        selected_detection: selected,
        active_group: Some(active.group_id),
        projected_lights: projected,
        advisory: state.advisory(),
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("detector failed at t={t}: {source}")]
    Detector {
        t: f64,
        #[source]
        source: DetectionError,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Runs the online phase over a time-ordered log. The detector is only
/// invoked on frames where a group is active; its output is τ-filtered.
pub fn run_log<'a, I, D>(
    frames: I,
    map: &PriorMap,
    detector: &D,
    cam: &CameraModel,
    cfg: &RecognizerConfig,
) -> Result<Vec<(f64, FrameVerdict)>, RunError>
where
    I: IntoIterator<Item = &'a LogFrame>,
    D: Detector + ?Sized,
{
    cfg.validate()?;
    frames
        .into_iter()
        .map(|frame| {
            if active_group(&frame.pose, map, cfg).is_none() {
                return Ok((frame.t, FrameVerdict::none()));
            }
            let raw = detector
                .detect(frame)
                .map_err(|source| RunError::Detector { t: frame.t, source })?;
            let dets = filter_by_confidence(&raw, cfg.tau);
            Ok((frame.t, recognize_frame(frame, &dets, map, cam, cfg)))
        })
        .collect()
}

/// One line of the verdict stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictRecord {
    pub t: f64,
    pub state: FinalState,
    pub group: Option<String>,
    pub selected: Option<Detection>,
    pub advisory: Advisory,
}

impl VerdictRecord {
    pub fn new(t: f64, v: &FrameVerdict) -> Self {
        Self {
            t,
            state: v.state,
            group: v.active_group.clone(),
            selected: v.selected_detection,
            advisory: v.advisory,
        }
    }
}

#[derive(Debug, Error)]
pub enum VerdictIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub fn write_verdicts<W: Write>(out: W, records: &[VerdictRecord]) -> Result<(), VerdictIoError> {
    let mut w = BufWriter::new(out);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_verdicts<R: std::io::Read>(input: R) -> Result<Vec<VerdictRecord>, VerdictIoError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| VerdictIoError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_verdicts_file(path: &Path, records: &[VerdictRecord]) -> Result<(), VerdictIoError> {
    write_verdicts(std::fs::File::create(path)?, records)
}

pub fn read_verdicts_file(path: &Path) -> Result<Vec<VerdictRecord>, VerdictIoError> {
    read_verdicts(std::fs::File::open(path)?)
}
