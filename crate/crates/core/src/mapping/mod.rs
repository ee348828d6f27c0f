//! Offline prior-map construction.
//!
//! While a log is replayed, LiDAR points whose image projection falls inside
//! a detection box are moved to the world frame and buffered. Once
//! `flush_gap_frames` consecutive frames pass without any detection, the
//! buffer is clustered with DBSCAN and each cluster centroid becomes a
//! pending [`TLCandidate`] for human curation.

mod dbscan;
mod groups;
mod prior_map;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{filter_by_confidence, Detection, DetectionError, Detector};
use crate::geometry::{BoundingBox, CameraModel, Vec3};
use crate::replay::LogFrame;

pub use dbscan::{centroid, dbscan, Clustering};
pub use groups::{group_id_for, link_groups, transfer_annotations};
pub use prior_map::{MapLight, PriorMap, TLGroup, PRIOR_MAP_VERSION};

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("unknown route {0:?}")]
    UnknownRoute(String),
    #[error("invalid prior map: {0}")]
    InvalidMap(String),
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid mapping config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Detection(#[from] DetectionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingConfig {
    /// Consecutive detection-free frames that trigger clustering.
    pub flush_gap_frames: u32,
    /// meters
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    /// meters
    pub group_link_radius: f64,
    /// Fraction of box width/height removed before gating.
    pub tight_bbox_shrink: f64,
    /// Confidence threshold applied to detections before gating.
    pub tau: f64,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            flush_gap_frames: 8,
            dbscan_eps: 0.5,
            dbscan_min_pts: 6,
            group_link_radius: 20.0,
            tight_bbox_shrink: 0.1,
            tau: 0.5,
        }
    }
}

impl MappingConfig {
    pub fn validate(&self) -> Result<(), MappingError> {
        let bad = |m: &str| Err(MappingError::InvalidConfig(m.into()));
        if self.flush_gap_frames < 1 {
            return bad("flush_gap_frames must be >= 1");
        }
        if !(self.dbscan_eps > 0.0) {
            return bad("dbscan_eps must be > 0");
        }
        if self.dbscan_min_pts < 1 {
            return bad("dbscan_min_pts must be >= 1");
        }
        if !(self.group_link_radius > 0.0) {
            return bad("group_link_radius must be > 0");
        }
        if !(0.0..1.0).contains(&self.tight_bbox_shrink) {
            return bad("tight_bbox_shrink must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must be in [0, 1]");
        }
        Ok(())
    }
}

/// World-frame hits accumulated since the last flush.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointBuffer {
    pub points: Vec<Vec3>,
    /// Consecutive frames without a detection.
    pub gap_counter: u32,
    /// First and last timestamp of frames that contributed detections.
    pub source_frame_range: Option<(f64, f64)>,
}

impl PointBuffer {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateStatus {
    Pending,
    Accepted,
    Rejected,
}

/// A proposed traffic light position awaiting a human decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CandidateRepr", into = "CandidateRepr")]
pub struct TLCandidate {
    pub id: String,
    /// World frame, meters.
    pub centroid: Vec3,
    pub support: usize,
    pub source_frame_range: (f64, f64),
    pub status: CandidateStatus,
    pub group_id: Option<String>,
    pub relevant_for: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateRepr {
    id: String,
    centroid: [f64; 3],
    support: usize,
    source_frame_range: [f64; 2],
    status: CandidateStatus,
    group: Option<String>,
    relevant_for: BTreeSet<String>,
}

impl TryFrom<CandidateRepr> for TLCandidate {
    type Error = MappingError;

    fn try_from(r: CandidateRepr) -> Result<Self, Self::Error> {
        if r.centroid.iter().any(|v| !v.is_finite()) {
            return Err(MappingError::Parse(format!(
                "candidate {} has a non-finite centroid",
                r.id
            )));
        }
        Ok(TLCandidate {
            id: r.id,
            centroid: Vec3::from(r.centroid),
            support: r.support,
            source_frame_range: (r.source_frame_range[0], r.source_frame_range[1]),
            status: r.status,
            group_id: r.group,
            relevant_for: r.relevant_for,
        })
    }
}

impl From<TLCandidate> for CandidateRepr {
    fn from(c: TLCandidate) -> Self {
        CandidateRepr {
            id: c.id,
            centroid: [c.centroid.x, c.centroid.y, c.centroid.z],
            support: c.support,
            source_frame_range: [c.source_frame_range.0, c.source_frame_range.1],
            status: c.status,
            group: c.group_id,
            relevant_for: c.relevant_for,
        }
    }
}

impl TLCandidate {
    pub fn to_light(&self) -> MapLight {
        MapLight {
            id: self.id.clone(),
            position: self.centroid,
            relevant_for: self.relevant_for.clone(),
        }
    }
}

pub const CANDIDATE_FILE_VERSION: u32 = 1;

/// Output of `build-map`, input of curation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateFile {
    pub version: u32,
    pub route_id: String,
    pub candidates: Vec<TLCandidate>,
}

impl CandidateFile {
    pub fn new(route_id: impl Into<String>, candidates: Vec<TLCandidate>) -> Self {
        Self {
            version: CANDIDATE_FILE_VERSION,
            route_id: route_id.into(),
            candidates,
        }
    }

    pub fn load(path: &Path) -> Result<Self, MappingError> {
        let s = std::fs::read_to_string(path)?;
        let f: CandidateFile =
            serde_json::from_str(&s).map_err(|e| MappingError::Parse(e.to_string()))?;
        if f.version != CANDIDATE_FILE_VERSION {
            return Err(MappingError::VersionMismatch {
                found: f.version,
                expected: CANDIDATE_FILE_VERSION,
            });
        }
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<(), MappingError> {
        let s =
            serde_json::to_string_pretty(self).map_err(|e| MappingError::Parse(e.to_string()))?;
        std::fs::write(path, s + "\n")?;
        Ok(())
    }
}

/// Sequential candidate ids (`c0001`, `c0002`, ...).
#[derive(Debug, Clone, Default)]
pub struct CandidateIds {
    next: usize,
}

impl CandidateIds {
    pub fn starting_after(n: usize) -> Self {
        Self { next: n }
    }

    pub fn next_id(&mut self) -> String {
        self.next += 1;
        format!("c{:04}", self.next)
    }
}

/// Buffers the LiDAR points of `frame` that project inside any (shrunk)
/// detection box, transformed to the world frame. An empty `dets` bumps the
/// gap counter; otherwise the counter resets.
pub fn accumulate_hits(
    frame: &LogFrame,
    dets: &[Detection],
    buffer: &mut PointBuffer,
    cam: &CameraModel,
    cfg: &MappingConfig,
) {
    if dets.is_empty() {
        buffer.gap_counter += 1;
        return;
    }
    buffer.gap_counter = 0;
    buffer.source_frame_range = Some(match buffer.source_frame_range {
        Some((a, _)) => (a, frame.t),
        None => (frame.t, frame.t),
    });
    let boxes: Vec<BoundingBox> = dets
        .iter()
        .map(|d| d.bbox.shrink(cfg.tight_bbox_shrink))
        .collect();
    let to_cam = cam.vehicle_to_camera();
    let to_world = frame.pose.to_transform();
    for p in &frame.lidar {
        let Some(px) = cam.project(&to_cam.transform_point(p)) else {
            continue;
        };
        if boxes.iter().any(|b| b.contains(px.u, px.v)) {
            buffer.points.push(to_world.transform_point(p));
        }
    }
}

fn cluster_buffer(
    buffer: &mut PointBuffer,
    cfg: &MappingConfig,
    ids: &mut CandidateIds,
) -> Vec<TLCandidate> {
    let points = std::mem::take(&mut buffer.points);
    let range = buffer.source_frame_range.take().unwrap_or((0.0, 0.0));
    let clustering = dbscan(&points, cfg.dbscan_eps, cfg.dbscan_min_pts);
    log::debug!(
        "flushed {} points into {} clusters ({} noise)",
        points.len(),
        clustering.clusters.len(),
        clustering.noise.len()
    );
    clustering
        .clusters
        .iter()
        .map(|members| TLCandidate {
            id: ids.next_id(),
            centroid: centroid(&points, members),
            support: members.len(),
            source_frame_range: range,
            status: CandidateStatus::Pending,
            group_id: None,
            relevant_for: BTreeSet::new(),
        })
        .collect()
}

/// Clusters and empties the buffer once the detection gap reaches
/// `flush_gap_frames`. Otherwise leaves it untouched and returns nothing.
pub fn maybe_flush(
    buffer: &mut PointBuffer,
    cfg: &MappingConfig,
    ids: &mut CandidateIds,
) -> Vec<TLCandidate> {
    if buffer.gap_counter < cfg.flush_gap_frames || buffer.is_empty() {
        return Vec::new();
    }
    cluster_buffer(buffer, cfg, ids)
}

/// Stateful per-log mapping run.
#[derive(Debug)]
pub struct MappingPipeline {
    cfg: MappingConfig,
    cam: CameraModel,
    buffer: PointBuffer,
    ids: CandidateIds,
    candidates: Vec<TLCandidate>,
}

impl MappingPipeline {
    pub fn new(cam: CameraModel, cfg: MappingConfig) -> Result<Self, MappingError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            cam,
            buffer: PointBuffer::default(),
            ids: CandidateIds::default(),
            candidates: Vec::new(),
        })
    }

    /// Feeds one frame with its raw detector output (τ is applied here).
    pub fn process(&mut self, frame: &LogFrame, raw: &[Detection]) {
        let dets = filter_by_confidence(raw, self.cfg.tau);
        accumulate_hits(frame, &dets, &mut self.buffer, &self.cam, &self.cfg);
        let flushed = maybe_flush(&mut self.buffer, &self.cfg, &mut self.ids);
        self.candidates.extend(flushed);
    }

    pub fn buffer(&self) -> &PointBuffer {
        &self.buffer
    }

    /// Clusters whatever is still buffered when the log ends.
    pub fn finish(mut self) -> Vec<TLCandidate> {
        if !self.buffer.is_empty() {
            let rest = cluster_buffer(&mut self.buffer, &self.cfg, &mut self.ids);
            self.candidates.extend(rest);
        }
        self.candidates
    }
}

/// Runs the whole offline pass over a log.
pub fn build_candidates<'a, I, D>(
    frames: I,
    detector: &D,
    cam: &CameraModel,
    cfg: &MappingConfig,
) -> Result<Vec<TLCandidate>, MappingError>
where
    I: IntoIterator<Item = &'a LogFrame>,
    D: Detector + ?Sized,
{
    let mut pipeline = MappingPipeline::new(*cam, *cfg)?;
    for frame in frames {
        let raw = detector.detect(frame)?;
        pipeline.process(frame, &raw);
    }
    Ok(pipeline.finish())
}

/// Accepts every candidate for `route_id` and links groups automatically.
pub fn auto_accept(candidates: &[TLCandidate], route_id: &str, link_radius: f64) -> PriorMap {
    let lights: Vec<MapLight> = candidates
        .iter()
        .map(|c| {
            let mut l = c.to_light();
            l.relevant_for.insert(route_id.to_string());
            l
        })
        .collect();
    let groups = link_groups(&lights, link_radius);
    PriorMap::new(route_id, lights, groups).expect("linked groups cover every light")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::StateClass;
    use crate::geometry::{camera_to_vehicle_rotation, Pose6D, RigidTransform};
    use crate::recognition::FinalState;

    /// Camera at the vehicle origin looking along +x, 1000 px focal length.
    fn cam() -> CameraModel {
        let ext = RigidTransform::new(camera_to_vehicle_rotation(), Vec3::zeros()).unwrap();
        CameraModel::new(1000.0, 1000.0, 640.0, 480.0, 1280, 960, ext).unwrap()
    }

    fn frame(t: f64, pose: Pose6D, lidar: Vec<Vec3>) -> LogFrame {
        LogFrame {
            t,
            pose,
            lidar,
            gt_detections: vec![],
            image_ref: None,
            gt_state: FinalState::None,
        }
    }

    fn det(b: [f64; 4]) -> Detection {
        Detection::new(
            BoundingBox::new(b[0], b[1], b[2], b[3]).unwrap(),
            StateClass::Red,
            0.9,
        )
        .unwrap()
    }

    #[test]
    fn hit_at_box_center_is_buffered_in_world_frame() {
        // vehicle at (100, 50) heading +y; point 20 m ahead, 2 m left, 3 m up
        let pose = Pose6D::planar(100.0, 50.0, std::f64::consts::FRAC_PI_2);
        let p_vehicle = Vec3::new(20.0, 2.0, 3.0);
        // camera frame: x = -2, y = -3, z = 20 -> u = 540, v = 330
        let f = frame(0.0, pose, vec![p_vehicle]);
        let mut buf = PointBuffer::default();
        accumulate_hits(
            &f,
            &[det([530.0, 310.0, 550.0, 350.0])],
            &mut buf,
            &cam(),
            &MappingConfig::default(),
        );
        assert_eq!(buf.points.len(), 1);
        let expected = pose.to_transform().transform_point(&p_vehicle);
        assert!((buf.points[0] - expected).norm() < 1e-9);
        assert!((buf.points[0] - Vec3::new(98.0, 70.0, 3.0)).norm() < 1e-9);
        assert_eq!(buf.gap_counter, 0);
        assert_eq!(buf.source_frame_range, Some((0.0, 0.0)));
    }

    #[test]
    fn misses_and_points_behind_are_ignored() {
        let pose = Pose6D::planar(0.0, 0.0, 0.0);
        let f = frame(
            0.0,
            pose,
            vec![Vec3::new(20.0, -5.0, 3.0), Vec3::new(-20.0, 2.0, 3.0)],
        );
        let mut buf = PointBuffer::default();
        accumulate_hits(
            &f,
            &[det([530.0, 310.0, 550.0, 350.0])],
            &mut buf,
            &cam(),
            &MappingConfig::default(),
        );
        assert!(buf.points.is_empty());
    }

    #[test]
    fn shrink_excludes_box_edges() {
        let pose = Pose6D::planar(0.0, 0.0, 0.0);
        // projects to u = 640 + 1000 * 0.19 / 20 = 649.5, near the right edge of [630, 650]
        let f = frame(0.0, pose, vec![Vec3::new(20.0, -0.19, 0.0)]);
        let cfg = MappingConfig::default();
        let mut buf = PointBuffer::default();
        accumulate_hits(
            &f,
            &[det([630.0, 470.0, 650.0, 490.0])],
            &mut buf,
            &cam(),
            &cfg,
        );
        assert!(buf.points.is_empty());
        let loose = MappingConfig {
            tight_bbox_shrink: 0.0,
            ..cfg
        };
        accumulate_hits(
            &f,
            &[det([630.0, 470.0, 650.0, 490.0])],
            &mut buf,
            &cam(),
            &loose,
        );
        assert_eq!(buf.points.len(), 1);
    }

    #[test]
    fn gap_counter_tracks_empty_frames() {
        let f = frame(0.0, Pose6D::planar(0.0, 0.0, 0.0), vec![]);
        let mut buf = PointBuffer::default();
        let cfg = MappingConfig::default();
        for _ in 0..3 {
            accumulate_hits(&f, &[], &mut buf, &cam(), &cfg);
        }
        assert_eq!(buf.gap_counter, 3);
        accumulate_hits(&f, &[det([0.0, 0.0, 1.0, 1.0])], &mut buf, &cam(), &cfg);
        assert_eq!(buf.gap_counter, 0);
    }

    fn two_blob_buffer(gap: u32) -> PointBuffer {
        let mut points = Vec::new();
        for k in 0..50 {
            let o = Vec3::new(
                (k % 5) as f64 * 0.05,
                (k / 5 % 5) as f64 * 0.05,
                (k / 25) as f64 * 0.05,
            );
            points.push(Vec3::new(10.0, 0.0, 5.0) + o);
            points.push(Vec3::new(30.0, 0.0, 5.0) + o);
        }
        PointBuffer {
            points,
            gap_counter: gap,
            source_frame_range: Some((1.0, 2.0)),
        }
    }

    #[test]
    fn flush_after_eight_empty_frames() {
        let cfg = MappingConfig::default();
        let mut ids = CandidateIds::default();
        let mut buf = two_blob_buffer(8);
        let c = maybe_flush(&mut buf, &cfg, &mut ids);
        assert_eq!(c.len(), 2);
        assert!(buf.points.is_empty());
        assert_eq!(c[0].id, "c0001");
        assert_eq!(c[1].id, "c0002");
        assert!(c
            .iter()
            .all(|c| c.support == 50 && c.status == CandidateStatus::Pending));
        assert!((c[0].centroid - Vec3::new(10.1, 0.1, 5.025)).norm() < 1e-9);
        assert_eq!(c[0].source_frame_range, (1.0, 2.0));
    }

    #[test]
    fn no_flush_before_gap_or_when_empty() {
        let cfg = MappingConfig::default();
        let mut ids = CandidateIds::default();
        let mut buf = two_blob_buffer(7);
        let before = buf.clone();
        assert!(maybe_flush(&mut buf, &cfg, &mut ids).is_empty());
        assert_eq!(buf, before);
        let mut empty = PointBuffer {
            gap_counter: 8,
            ..Default::default()
        };
        let before = empty.clone();
        assert!(maybe_flush(&mut empty, &cfg, &mut ids).is_empty());
        assert_eq!(empty, before);
    }

    #[test]
    fn config_validation() {
        assert!(MappingConfig::default().validate().is_ok());
        for bad in [
            MappingConfig {
                flush_gap_frames: 0,
                ..Default::default()
            },
            MappingConfig {
                dbscan_eps: 0.0,
                ..Default::default()
            },
            MappingConfig {
                dbscan_min_pts: 0,
                ..Default::default()
            },
            MappingConfig {
                group_link_radius: -1.0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn candidate_wire_format() {
        let c = TLCandidate {
            id: "c0001".into(),
            centroid: Vec3::new(1.0, 2.0, 3.0),
            support: 7,
            source_frame_range: (0.5, 1.5),
            status: CandidateStatus::Pending,
            group_id: None,
            relevant_for: BTreeSet::new(),
        };
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(
            s,
            r#"{"id":"c0001","centroid":[1.0,2.0,3.0],"support":7,"source_frame_range":[0.5,1.5],"status":"pending","group":null,"relevant_for":[]}"#
        );
        assert_eq!(serde_json::from_str::<TLCandidate>(&s).unwrap(), c);
    }
}
