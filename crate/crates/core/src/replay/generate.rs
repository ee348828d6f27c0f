//! Synthetic log generation.
//!
//! Light heads are 0.3 x 0.9 x 0.3 m boxes whose front face is centered on
//! the light position and points along `facing`. LiDAR hits on heads are
//! exact ray casts of the beam pattern; background clutter is sprayed.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    GtDetection, LogFrame, Rddf, Scenario, ScenarioError, ScenarioLight, TruthBundle, TruthFrame,
    Waypoint,
};
use crate::detection::StateClass;
use crate::geometry::{normalize_angle, BoundingBox, Pose6D, Vec3};
use crate::mapping::{MapLight, PriorMap, TLGroup};
use crate::recognition::{active_group, FinalState, RecognizerConfig};

/// Half extents of a light head: depth, width, height.
pub const HEAD_HALF_EXTENTS: [f64; 3] = [0.15, 0.15, 0.45];

/// Oriented box of a light head in world coordinates.
#[derive(Debug, Clone, Copy)]
pub struct HeadBox {
    pub center: Vec3,
    /// Unit axes: face normal, width direction, up.
    pub axes: [Vec3; 3],
}

impl HeadBox {
    pub fn of(light: &ScenarioLight) -> Self {
        let face = Vec3::from(light.position);
        let n = Vec3::new(light.facing.cos(), light.facing.sin(), 0.0);
        let s = Vec3::new(-light.facing.sin(), light.facing.cos(), 0.0);
        Self {
            center: face - HEAD_HALF_EXTENTS[0] * n,
            axes: [n, s, Vec3::z()],
        }
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let mut out = [Vec3::zeros(); 8];
        for (k, c) in out.iter_mut().enumerate() {
            let mut p = self.center;
            for a in 0..3 {
                let sign = if k >> a & 1 == 1 { 1.0 } else { -1.0 };
                p += sign * HEAD_HALF_EXTENTS[a] * self.axes[a];
            }
            *c = p;
        }
        out
    }

    /// Distance along the unit ray `origin + s * dir` to the first hit.
    pub fn ray_hit(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let rel = origin - self.center;
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            let o = rel.dot(&self.axes[a]);
            let d = dir.dot(&self.axes[a]);
            let h = HEAD_HALF_EXTENTS[a];
            if d.abs() < 1e-15 {
                if o.abs() > h {
                    return None;
                }
                continue;
            }
            let (mut a0, mut a1) = ((-h - o) / d, (h - o) / d);
            if a0 > a1 {
                std::mem::swap(&mut a0, &mut a1);
            }
            t0 = t0.max(a0);
            t1 = t1.min(a1);
            if t0 > t1 {
                return None;
            }
        }
        (t0 > 0.0).then_some(t0)
    }
}

/// Everything `generate` produces.
#[derive(Debug, Clone)]
pub struct Generated {
    pub frames: Vec<LogFrame>,
    pub truth: TruthBundle,
}

/// True vehicle pose and speed at time `t` along the waypoint polyline.
/// The vehicle stops at the last waypoint.
pub fn pose_at(path: &[Waypoint], t: f64) -> (Pose6D, f64) {
    let mut remaining = t;
    for w in path.windows(2) {
        let delta = w[1].pose.position - w[0].pose.position;
        let len = delta.norm();
        if len == 0.0 {
            continue;
        }
        let yaw = delta.y.atan2(delta.x);
        let seg_t = len / w[0].speed;
        if remaining < seg_t {
            let p = w[0].pose.position + delta * (remaining * w[0].speed / len);
            return (
                Pose6D::new(p, w[0].pose.roll, w[0].pose.pitch, yaw),
                w[0].speed,
            );
        }
        remaining -= seg_t;
    }
    let last = path.last().expect("path is nonempty");
    let yaw = heading_into(path, path.len() - 1);
    (
        Pose6D::new(last.pose.position, last.pose.roll, last.pose.pitch, yaw),
        0.0,
    )
}

fn heading_into(path: &[Waypoint], i: usize) -> f64 {
    let segs = |a: usize, b: usize| {
        let d = path[b].pose.position - path[a].pose.position;
        (d.norm() > 0.0).then(|| d.y.atan2(d.x))
    };
    (1..=i)
        .rev()
        .find_map(|k| segs(k - 1, k))
        .or_else(|| (i + 1..path.len()).find_map(|k| segs(k - 1, k)))
        .unwrap_or(path[i].pose.yaw)
}

/// The route the vehicle drives, with headings taken from the path.
pub fn rddf_for(scenario: &Scenario) -> Rddf {
    let waypoints = scenario
        .path
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let yaw = if i + 1 < scenario.path.len() {
                let d = scenario.path[i + 1].pose.position - w.pose.position;
                if d.norm() > 0.0 {
                    d.y.atan2(d.x)
                } else {
                    heading_into(&scenario.path, i)
                }
            } else {
                heading_into(&scenario.path, i)
            };
            Waypoint {
                pose: Pose6D::new(w.pose.position, w.pose.roll, w.pose.pitch, yaw),
                speed: w.speed,
            }
        })
        .collect();
    Rddf {
        route_id: scenario.route_id.clone(),
        waypoints,
    }
}

/// Prior map of the scenario's relevant lights, grouped as declared.
pub fn truth_map(scenario: &Scenario) -> Result<PriorMap, ScenarioError> {
    let route: BTreeSet<String> = [scenario.route_id.clone()].into();
    let mut groups: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    let mut lights = Vec::new();
    for l in scenario.lights.iter().filter(|l| l.relevant) {
        groups.entry(&l.group).or_default().push(l.id.clone());
        lights.push(MapLight {
            id: l.id.clone(),
            position: Vec3::from(l.position),
            relevant_for: route.clone(),
        });
    }
    let groups = groups
        .into_iter()
        .map(|(id, light_ids)| TLGroup {
            id: id.to_string(),
            light_ids,
        })
        .collect();
    PriorMap::new(scenario.route_id.clone(), lights, groups)
        .map_err(|e| ScenarioError::InvalidScenario(e.to_string()))
}

struct Pole {
    base: Vec3,
}

fn place_poles(scenario: &Scenario) -> Vec<Pole> {
    let n = scenario.clutter.poles as usize;
    if n == 0 {
        return Vec::new();
    }
    let total = scenario.path_duration();
    (0..n)
        .map(|k| {
            // spread evenly in time along the path, alternating sides
            let t = if total.is_finite() {
                total * (k as f64 + 0.5) / n as f64
            } else {
                0.0
            };
            let (pose, _) = pose_at(&scenario.path, t);
            let side = if k % 2 == 0 { 1.0 } else { -1.0 };
            let mut base = pose.position + side * scenario.clutter.pole_offset * pose.left();
            base.z = pose.position.z;
            Pole { base }
        })
        .collect()
}

fn frame_rng(seed: u64, stream: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos((k as u128) << 20);
    rng
}

/// Ray-cast hits on light heads, vehicle frame, in beam/azimuth order.
fn head_hits(
    scenario: &Scenario,
    heads: &[HeadBox],
    pose: &Pose6D,
    elevations: &[f64],
) -> Vec<Vec3> {
    let lidar = &scenario.lidar;
    let to_vehicle = pose.to_transform().inverse();
    let origin = Vec3::from(lidar.mount);
    let step = 2.0 * PI / lidar.points_per_beam as f64;
    let mut hits: BTreeMap<(usize, i64), (f64, Vec3)> = BTreeMap::new();
    for head in heads {
        let local = HeadBox {
            center: to_vehicle.transform_point(&head.center),
            axes: head.axes.map(|a| to_vehicle.transform_vector(&a)),
        };
        let rel_center = local.center - origin;
        let dist = rel_center.norm();
        if dist < 1.0 || dist > lidar.max_range + 1.0 {
            continue;
        }
        let az_c = rel_center.y.atan2(rel_center.x);
        let (mut daz_min, mut daz_max) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut el_min, mut el_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for c in local.corners() {
            let r = c - origin;
            let daz = normalize_angle(r.y.atan2(r.x) - az_c);
            daz_min = daz_min.min(daz);
            daz_max = daz_max.max(daz);
            let el = r.z.atan2((r.x * r.x + r.y * r.y).sqrt());
            el_min = el_min.min(el);
            el_max = el_max.max(el);
        }
        let k0 = ((az_c + daz_min) / step).ceil() as i64;
        let k1 = ((az_c + daz_max) / step).floor() as i64;
        for (b, &el) in elevations.iter().enumerate() {
            if el < el_min || el > el_max {
                continue;
            }
            for k in k0..=k1 {
                let az = k as f64 * step;
                let dir = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
                let Some(s) = local.ray_hit(&origin, &dir) else {
                    continue;
                };
                if s > lidar.max_range {
                    continue;
                }
                let key = (b, k.rem_euclid(lidar.points_per_beam as i64));
                let p = origin + s * dir;
                match hits.get(&key) {
                    Some((best, _)) if *best <= s => {}
                    _ => {
                        hits.insert(key, (s, p));
                    }
                }
            }
        }
    }
    hits.into_values().map(|(_, p)| p).collect()
}

fn clutter(scenario: &Scenario, poles: &[Pole], pose: &Pose6D, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let c = &scenario.clutter;
    let to_vehicle = pose.to_transform().inverse();
    let mut out = Vec::with_capacity(c.ground_points as usize);
    for _ in 0..c.ground_points {
        let r = c.ground_radius * rng.random::<f64>().sqrt();
        let th = rng.random::<f64>() * 2.0 * PI;
        let dz: f64 = 0.02 * rng.sample::<f64, _>(StandardNormal);
        out.push(Vec3::new(r * th.cos(), r * th.sin(), dz));
    }
    for pole in poles {
        let rel = to_vehicle.transform_point(&pole.base);
        if rel.xy().norm() > scenario.lidar.max_range * 0.5 {
            continue;
        }
        for _ in 0..c.points_per_pole {
            let th = rng.random::<f64>() * 2.0 * PI;
            let h = rng.random::<f64>() * c.pole_height;
            let w = pole.base + Vec3::new(0.1 * th.cos(), 0.1 * th.sin(), h);
            out.push(to_vehicle.transform_point(&w));
        }
    }
    out
}

/// Pixel box of a head as seen by the camera, if the light is lit, faces
/// the camera and its face center is in view.
fn gt_box(
    scenario: &Scenario,
    light: &ScenarioLight,
    head: &HeadBox,
    pose: &Pose6D,
) -> Option<BoundingBox> {
    let cam = &scenario.camera;
    let world_to_cam = cam.world_to_camera(pose);
    let cam_pos = pose
        .to_transform()
        .transform_point(cam.extrinsics.translation());
    let face = Vec3::from(light.position);
    if (cam_pos - face).dot(&head.axes[0]) <= 0.0 {
        return None;
    }
    cam.project(&world_to_cam.transform_point(&face))?;
    let mut px = Vec::with_capacity(8);
    for c in head.corners() {
        px.push(cam.project_unbounded(&world_to_cam.transform_point(&c))?);
    }
    BoundingBox::enclosing(px)?.clip(cam.width as f64, cam.height as f64)
}

/// Ornstein-Uhlenbeck pose error in the vehicle frame.
struct Drift {
    a: f64,
    sigma: [f64; 2],
    state: [f64; 2],
    rng: ChaCha8Rng,
}

impl Drift {
    fn new(scenario: &Scenario) -> Self {
        let n = &scenario.localization_noise;
        let dt = 1.0 / scenario.frame_rate;
        let mut rng = frame_rng(scenario.rng_seed, 2, 0);
        let sigma = [n.longitudinal, n.lateral];
        let state = sigma.map(|s| s * rng.sample::<f64, _>(StandardNormal));
        Self {
            a: (-dt / n.time_constant).exp(),
            sigma,
            state,
            rng,
        }
    }

    fn current(&self) -> [f64; 2] {
        self.state
    }

    fn step(&mut self) {
        let q = (1.0 - self.a * self.a).sqrt();
        for i in 0..2 {
            let xi: f64 = self.rng.sample(StandardNormal);
            self.state[i] = self.a * self.state[i] + q * self.sigma[i] * xi;
        }
    }
}

/// Synthesizes a log and its ground truth. Deterministic in `rng_seed`.
pub fn generate(scenario: &Scenario) -> Result<Generated, ScenarioError> {
    scenario.validate()?;
    let map = truth_map(scenario)?;
    let heads: Vec<HeadBox> = scenario.lights.iter().map(HeadBox::of).collect();
    let by_id: BTreeMap<&str, &ScenarioLight> =
        scenario.lights.iter().map(|l| (l.id.as_str(), l)).collect();
    let elevations = scenario.lidar.elevations();
    let poles = place_poles(scenario);
    let rcfg = RecognizerConfig {
        activation_range: scenario.activation_range,
        ..RecognizerConfig::default()
    };
    let noisy = !scenario.localization_noise.is_zero();
    let mut drift = Drift::new(scenario);

    let n = scenario.frame_count();
    let mut frames = Vec::with_capacity(n);
    let mut truth_frames = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 / scenario.frame_rate;
        let (pose, _) = pose_at(&scenario.path, t);

        let mut lidar = head_hits(scenario, &heads, &pose, &elevations);
        let mut rng = frame_rng(scenario.rng_seed, 1, k);
        lidar.extend(clutter(scenario, &poles, &pose, &mut rng));

        let gt_detections = scenario
            .lights
            .iter()
            .zip(&heads)
            .filter_map(|(l, h)| {
                let class = match l.state_at(t) {
                    FinalState::Red => StateClass::Red,
                    FinalState::Green => StateClass::Green,
                    _ => return None,
                };
                let bbox = gt_box(scenario, l, h, &pose)?;
                Some(GtDetection {
                    bbox,
                    class,
                    light: l.id.clone(),
                })
            })
            .collect();

        let active = active_group(&pose, &map, &rcfg);
        let gt_state = active.as_ref().map_or(FinalState::None, |a| {
            by_id[a.nearest_light.as_str()].state_at(t)
        });

        let logged = if noisy {
            let [e_lon, e_lat] = drift.current();
            drift.step();
            Pose6D::new(
                pose.position + e_lon * pose.forward() + e_lat * pose.left(),
                pose.roll,
                pose.pitch,
                pose.yaw,
            )
        } else {
            pose
        };

        truth_frames.push(TruthFrame {
            t,
            pose,
            gt_state,
            group: active.as_ref().map(|a| a.group_id.clone()),
            distance: active.as_ref().map(|a| a.distance),
        });
        frames.push(LogFrame {
            t,
            pose: logged,
            lidar,
            gt_detections,
            gt_state,
            image_ref: None,
        });
    }

    Ok(Generated {
        frames,
        truth: TruthBundle::new(map, rddf_for(scenario), truth_frames),
    })
}
