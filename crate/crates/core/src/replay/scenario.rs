use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::NoiseModel;
use crate::geometry::{CameraModel, Pose6D};
use crate::recognition::FinalState;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Interval `[start, end)` during which a light shows `state`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub start: f64,
    pub end: f64,
    pub state: FinalState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioLight {
    pub id: String,
    /// Center of the lamp face, world frame.
    pub position: [f64; 3],
    /// Direction the lamp face points to, radians in the world xy plane.
    pub facing: f64,
    pub group: String,
    /// Outside every entry the light is off.
    #[serde(default)]
    pub schedule: Vec<ScheduleEntry>,
    /// Whether the light belongs in the route's prior map.
    #[serde(default = "yes")]
    pub relevant: bool,
}

fn yes() -> bool {
    true
}

impl ScenarioLight {
    pub fn state_at(&self, t: f64) -> FinalState {
        self.schedule
            .iter()
            .find(|e| e.start <= t && t < e.end)
            .map_or(FinalState::Off, |e| e.state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub pose: Pose6D,
    /// m/s, held until the next waypoint.
    pub speed: f64,
}

/// Rotating multi-beam scanner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarModel {
    pub beams: u32,
    /// degrees
    pub vfov_top: f64,
    /// degrees
    pub vfov_bottom: f64,
    /// Azimuth steps per revolution.
    pub points_per_beam: u32,
    /// meters
    pub max_range: f64,
    /// Sensor origin in the vehicle frame.
    pub mount: [f64; 3],
}

impl Default for LidarModel {
    fn default() -> Self {
        Self {
            beams: 32,
            vfov_top: 10.0,
            vfov_bottom: -30.0,
            points_per_beam: 1080,
            max_range: 100.0,
            mount: [0.0, 0.0, 1.9],
        }
    }
}

impl LidarModel {
    pub fn scan_size(&self) -> usize {
        self.beams as usize * self.points_per_beam as usize
    }

    /// Beam elevations in radians, top to bottom.
    pub fn elevations(&self) -> Vec<f64> {
        let n = self.beams as usize;
        if n == 1 {
            return vec![self.vfov_top.to_radians()];
        }
        (0..n)
            .map(|i| {
                let f = i as f64 / (n - 1) as f64;
                (self.vfov_top + f * (self.vfov_bottom - self.vfov_top)).to_radians()
            })
            .collect()
    }
}

/// Background points that are not light heads. They are sprayed rather
/// than ray-cast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClutterModel {
    /// Points per frame on the road surface around the vehicle.
    pub ground_points: u32,
    /// meters
    pub ground_radius: f64,
    /// Number of roadside poles along the path.
    pub poles: u32,
    /// Points per frame on each pole within range.
    pub points_per_pole: u32,
    /// meters
    pub pole_height: f64,
    /// Lateral offset of poles from the path, meters.
    pub pole_offset: f64,
}

impl Default for ClutterModel {
    fn default() -> Self {
        Self {
            ground_points: 400,
            ground_radius: 30.0,
            poles: 12,
            points_per_pole: 40,
            pole_height: 3.5,
            pole_offset: 6.0,
        }
    }
}

/// Stationary standard deviations of the pose error, vehicle frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationNoise {
    /// meters
    pub longitudinal: f64,
    /// meters
    pub lateral: f64,
    /// Correlation time of the drift, seconds.
    pub time_constant: f64,
}

impl Default for LocalizationNoise {
    fn default() -> Self {
        Self {
            longitudinal: 0.0,
            lateral: 0.0,
            time_constant: 2.0,
        }
    }
}

impl LocalizationNoise {
    /// Error levels of a typical production localizer.
    pub fn nominal() -> Self {
        Self {
            longitudinal: 0.28,
            lateral: 0.14,
            time_constant: 2.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.longitudinal == 0.0 && self.lateral == 0.0
    }
}

/// Everything needed to synthesize a log with known ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub route_id: String,
    #[serde(default)]
    pub lights: Vec<ScenarioLight>,
    pub path: Vec<Waypoint>,
    #[serde(default = "CameraModel::default_vehicle_camera")]
    pub camera: CameraModel,
    #[serde(default)]
    pub lidar: LidarModel,
    #[serde(default)]
    pub clutter: ClutterModel,
    #[serde(default)]
    pub localization_noise: LocalizationNoise,
    #[serde(default)]
    pub detector: NoiseModel,
    /// Defaults to the time needed to drive the path.
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    /// Range used for ground-truth states, meters.
    #[serde(default = "default_activation_range")]
    pub activation_range: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_frame_rate() -> f64 {
    16.0
}

fn default_activation_range() -> f64 {
    100.0
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self, ScenarioError> {
        let sc: Scenario =
            serde_json::from_str(s).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::InvalidScenario(m));
        if self.route_id.is_empty() {
            return bad("route_id is empty".into());
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return bad(format!(
                "frame_rate must be positive, got {}",
                self.frame_rate
            ));
        }
        if !(self.activation_range > 0.0) {
            return bad("activation_range must be positive".into());
        }
        if let Some(d) = self.duration {
            if !(d >= 0.0 && d.is_finite()) {
                return bad(format!("duration must be non-negative, got {d}"));
            }
        }
        if self.path.is_empty() {
            return bad("path has no waypoints".into());
        }
        for (i, w) in self.path.iter().enumerate() {
            if !(w.speed >= 0.0 && w.speed.is_finite()) {
                return bad(format!("waypoint {i} has invalid speed {}", w.speed));
            }
        }
        if self.duration.is_none() && self.path_duration().is_infinite() {
            return bad("path has a zero-speed segment and no duration is given".into());
        }
        let mut ids = BTreeSet::new();
        for l in &self.lights {
            if !ids.insert(l.id.as_str()) {
                return bad(format!("duplicate light id {}", l.id));
            }
            if l.group.is_empty() {
                return bad(format!("light {} has no group", l.id));
            }
            if l.position.iter().chain([&l.facing]).any(|v| !v.is_finite()) {
                return bad(format!("light {} has non-finite geometry", l.id));
            }
            let mut sched = l.schedule.clone();
            sched.sort_by(|a, b| a.start.total_cmp(&b.start));
            for e in &sched {
                if !(e.start < e.end) {
                    return bad(format!(
                        "light {}: empty schedule entry [{}, {})",
                        l.id, e.start, e.end
                    ));
                }
                if e.state == FinalState::None {
                    return bad(format!(
                        "light {}: schedule state must be red, green or off",
                        l.id
                    ));
                }
            }
            if sched.windows(2).any(|w| w[1].start < w[0].end) {
                return bad(format!("light {}: overlapping schedule entries", l.id));
            }
        }
        let lidar = &self.lidar;
        if lidar.beams == 0 || lidar.points_per_beam == 0 {
            return bad("lidar needs at least one beam and one azimuth step".into());
        }
        if !(lidar.vfov_top > lidar.vfov_bottom) || !(lidar.max_range > 0.0) {
            return bad("lidar field of view or range is invalid".into());
        }
        let n = &self.localization_noise;
        if !(n.longitudinal >= 0.0 && n.lateral >= 0.0 && n.time_constant > 0.0) {
            return bad("localization noise sigmas must be >= 0 and time_constant > 0".into());
        }
        self.detector
            .validate()
            .map_err(|e| ScenarioError::InvalidScenario(e.to_string()))?;
        Ok(())
    }

    /// Seconds needed to drive from the first to the last waypoint.
    pub fn path_duration(&self) -> f64 {
        self.path
            .windows(2)
            .map(|w| {
                let len = (w[1].pose.position - w[0].pose.position).norm();
                if len == 0.0 {
                    0.0
                } else {
                    len / w[0].speed
                }
            })
            .sum()
    }

    pub fn duration(&self) -> f64 {
        self.duration.unwrap_or_else(|| self.path_duration())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration() * self.frame_rate + 1e-9).floor() as usize + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> Scenario {
        Scenario::from_json(
            r#"{
                "route_id": "demo",
                "path": [
                    {"pose": [0, 0, 0, 0, 0, 0], "speed": 10},
                    {"pose": [100, 0, 0, 0, 0, 0], "speed": 10}
                ]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let s = minimal();
        assert_eq!(s.frame_rate, 16.0);
        assert_eq!(s.lidar.beams, 32);
        assert_eq!(s.lidar.scan_size(), 34_560);
        assert_eq!(s.duration(), 10.0);
        assert_eq!(s.frame_count(), 161);
        assert_eq!(s.camera, CameraModel::default_vehicle_camera());
    }

    #[test]
    fn beam_elevations_span_the_fov() {
        let e = LidarModel::default().elevations();
        assert_eq!(e.len(), 32);
        assert!((e[0] - 10f64.to_radians()).abs() < 1e-12);
        assert!((e[31] + 30f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn schedule_lookup_is_half_open() {
        let l = ScenarioLight {
            id: "a".into(),
            position: [0.0; 3],
            facing: 0.0,
            group: "g".into(),
            schedule: vec![ScheduleEntry {
                start: 1.0,
                end: 2.0,
                state: FinalState::Red,
            }],
            relevant: true,
        };
        assert_eq!(l.state_at(0.5), FinalState::Off);
        assert_eq!(l.state_at(1.0), FinalState::Red);
        assert_eq!(l.state_at(2.0), FinalState::Off);
    }

    #[test]
    fn rejects_bad_scenarios() {
        let mut s = minimal();
        s.frame_rate = 0.0;
        assert!(s.validate().is_err());
        let mut s = minimal();
        s.lights.push(ScenarioLight {
            id: "a".into(),
            position: [0.0; 3],
            facing: 0.0,
            group: "g".into(),
            schedule: vec![
                ScheduleEntry {
                    start: 0.0,
                    end: 2.0,
                    state: FinalState::Red,
                },
                ScheduleEntry {
                    start: 1.0,
                    end: 3.0,
                    state: FinalState::Green,
                },
            ],
            relevant: true,
        });
        let err = s.validate().unwrap_err();
        assert!(err.to_string().contains("overlapping"), "{err}");
        assert!(Scenario::from_json(r#"{"route_id": "x", "path": []}"#).is_err());
        assert!(Scenario::from_json(r#"{"route_id": "x", "path": [], "bogus": 1}"#).is_err());
    }
}
