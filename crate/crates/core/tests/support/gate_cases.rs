//! Randomized single-frame cases for checking the online gate against the
//! oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tlr_core::detection::{filter_by_confidence, Detection, StateClass};
use tlr_core::geometry::{BoundingBox, CameraModel, Pose6D, Vec3};
use tlr_core::mapping::{MapLight, PriorMap, TLGroup};
use tlr_core::recognition::{recognize_frame, FinalState, RecognizerConfig};
use tlr_core::replay::LogFrame;

use super::oracles::{hand_project, hand_world_to_vehicle, oracle_in_gate, OracleGate};

pub struct GateCase {
    pub frame: LogFrame,
    pub map: PriorMap,
    pub dets: Vec<Detection>,
}

pub fn random_case(rng: &mut ChaCha8Rng) -> GateCase {
    let pose = Pose6D::new(
        Vec3::new(
            rng.random_range(-500.0..500.0),
            rng.random_range(-500.0..500.0),
            rng.random_range(-1.0..1.0),
        ),
        rng.random_range(-0.03..0.03),
        rng.random_range(-0.03..0.03),
        rng.random_range(-3.1..3.1),
    );
    let mut lights = Vec::new();
    let mut groups = Vec::new();
    for g in 0..rng.random_range(1..=3) {
        let base = (
            rng.random_range(-20.0..130.0),
            rng.random_range(-15.0..15.0),
        );
        let mut ids = Vec::new();
        for k in 0..rng.random_range(1..=3) {
            let id = format!("g{g}l{k}");
            let (fwd, left) = (
                base.0 + rng.random_range(-8.0..8.0),
                base.1 + rng.random_range(-6.0..6.0),
            );
            let p = pose.position
                + pose.forward() * fwd
                + pose.left() * left
                + Vec3::new(0.0, 0.0, rng.random_range(3.0..7.0));
            lights.push(MapLight {
                id: id.clone(),
                position: p,
                relevant_for: Default::default(),
            });
            ids.push(id);
        }
        groups.push(TLGroup {
            id: format!("g{g}"),
            light_ids: ids,
        });
    }
    let map = PriorMap::new("r", lights, groups).unwrap();

    // boxes scattered around projected lights plus a few anywhere
    let cam = CameraModel::default_vehicle_camera();
    let mut dets = Vec::new();
    for l in &map.lights {
        if let Some(px) = cam.project(&cam.world_to_camera(&pose).transform_point(&l.position)) {
            for _ in 0..rng.random_range(0..=2) {
                let spread = rng.random_range(0.0..3.0) * cam.fx * 1.5 / px.depth;
                let (cu, cv) = (
                    px.u + rng.random_range(-spread..=spread),
                    px.v + rng.random_range(-spread..=spread),
                );
                if let Some(d) = random_det(rng, cu, cv) {
                    dets.push(d);
                }
            }
        }
    }
    for _ in 0..rng.random_range(0..=2) {
        let (cu, cv) = (rng.random_range(0.0..1280.0), rng.random_range(0.0..960.0));
        if let Some(d) = random_det(rng, cu, cv) {
            dets.push(d);
        }
    }
    let frame = LogFrame {
        t: 0.0,
        pose,
        lidar: vec![],
        gt_detections: vec![],
        gt_state: FinalState::None,
        image_ref: None,
    };
    GateCase { frame, map, dets }
}

fn random_det(rng: &mut ChaCha8Rng, cu: f64, cv: f64) -> Option<Detection> {
    let (w, h) = (rng.random_range(2.0..30.0), rng.random_range(4.0..80.0));
    let bbox = BoundingBox::from_center(cu, cv, w, h)
        .ok()?
        .clip(1280.0, 960.0)?;
    let class = if rng.random_bool(0.5) {
        StateClass::Red
    } else {
        StateClass::Green
    };
    Detection::new(bbox, class, rng.random_range(0.0..=1.0)).ok()
}

/// Checks one case; returns a description of the first violation.
pub fn check_case(case: &GateCase) -> Result<(), String> {
    let cam = CameraModel::default_vehicle_camera();
    let cfg = RecognizerConfig::default();
    let f = 640.0 / 33f64.to_radians().tan();
    let pose = &case.frame.pose;
    let vehicle =
        |p: Vec3| hand_world_to_vehicle(pose.position, pose.roll, pose.pitch, pose.yaw, p);

    // active group: nearest member ahead within range
    let mut best: Option<(f64, &str)> = None;
    for g in &case.map.groups {
        for id in &g.light_ids {
            let l = case.map.light(id).unwrap();
            let pv = vehicle(l.position);
            let d = (l.position - pose.position).norm();
            if pv.x > 0.0
                && d <= cfg.activation_range
                && best.is_none_or(|(bd, bg)| d < bd || (d == bd && g.id.as_str() < bg))
            {
                best = Some((d, &g.id));
            }
        }
    }
    let offered = filter_by_confidence(&case.dets, cfg.tau);
    let verdict = recognize_frame(&case.frame, &offered, &case.map, &cam, &cfg);
    let Some((_, group)) = best else {
        return (verdict.state == FinalState::None && verdict.selected_detection.is_none())
            .then_some(())
            .ok_or_else(|| format!("no group in range but verdict {:?}", verdict.state));
    };
    if verdict.active_group.as_deref() != Some(group) {
        return Err(format!(
            "active group {:?}, oracle {group}",
            verdict.active_group
        ));
    }
    let gates: Vec<OracleGate> = case
        .map
        .group(group)
        .unwrap()
        .light_ids
        .iter()
        .filter_map(|id| {
            let pv = vehicle(case.map.light(id).unwrap().position);
            let (u, v) = hand_project(
                f,
                f,
                640.0,
                480.0,
                1280.0,
                960.0,
                Vec3::new(1.5, 0.0, 1.7),
                pv,
            )?;
            Some(OracleGate {
                u,
                v,
                radius: f * cfg.gate_radius / (pv.x - 1.5),
            })
        })
        .collect();
    let kept: Vec<&Detection> = case
        .dets
        .iter()
        .filter(|d| d.confidence >= cfg.tau)
        .collect();
    let centers: Vec<(f64, f64)> = kept.iter().map(|d| d.bbox.center()).collect();
    let scored = oracle_in_gate(&centers, &gates);
    let best_d = scored
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    const TOL: f64 = 1e-6;
    match verdict.selected_detection {
        None => {
            if best_d.is_finite() {
                return Err(format!(
                    "nothing selected though a box is {best_d} px inside a gate"
                ));
            }
            (verdict.state == FinalState::Off)
                .then_some(())
                .ok_or("empty gate must be OFF".into())
        }
        Some(sel) => {
            let k = kept
                .iter()
                .position(|d| **d == sel)
                .ok_or("selected a box that was not offered")?;
            // a box within TOL of a gate edge may go either way
            let Some(d) = scored[k].or_else(|| {
                let (u, v) = centers[k];
                gates
                    .iter()
                    .any(|g| ((u - g.u).powi(2) + (v - g.v).powi(2)).sqrt() <= g.radius + TOL)
                    .then_some(best_d)
            }) else {
                return Err("selected box lies outside every gate".into());
            };
            if d > best_d + TOL {
                return Err(format!("selected box is {d} px away, oracle best {best_d}"));
            }
            (verdict.state == FinalState::from(sel.class))
                .then_some(())
                .ok_or("state differs from selected class".into())
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
