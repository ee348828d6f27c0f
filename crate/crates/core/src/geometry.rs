//! Rigid transforms, the pinhole camera and image-space helpers.
//!
//! Frame conventions used throughout the crate:
//!
//! - **World**: fixed, z up.
//! - **Vehicle**: x forward, y left, z up. LiDAR points are logged in this frame.
//! - **Camera**: z forward (optical axis), x right, y down.
//!
//! A [`Pose6D`] places the vehicle frame in the world using intrinsic
//! Z-Y-X Euler angles (yaw, then pitch, then roll). [`CameraModel::extrinsics`]
//! is the camera pose in the vehicle frame, i.e. the camera→vehicle transform.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point or direction in meters. The frame is implied by context.
pub type Vec3 = Vector3<f64>;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation matrix is not orthonormal with det +1")]
    InvalidRotation,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
    #[error("invalid bounding box [{0}, {1}, {2}, {3}]")]
    InvalidBox(f64, f64, f64, f64),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
}

/// Wraps an angle into (-pi, pi]. Angles already in range are returned untouched.
pub fn normalize_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// Vehicle pose in the world frame.
///
/// Serialized as `[x, y, z, roll, pitch, yaw]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 6]", into = "[f64; 6]")]
pub struct Pose6D {
    pub position: Vec3,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Pose6D {
    pub fn new(position: Vec3, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            position,
            roll: normalize_angle(roll),
            pitch: normalize_angle(pitch),
            yaw: normalize_angle(yaw),
        }
    }

    /// Planar pose: position on the ground with heading only.
    pub fn planar(x: f64, y: f64, yaw: f64) -> Self {
        Self::new(Vec3::new(x, y, 0.0), 0.0, 0.0, yaw)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        *Rotation3::from_euler_angles(self.roll, self.pitch, self.yaw).matrix()
    }

    /// The vehicle→world transform.
    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation(),
            translation: self.position,
        }
    }

    /// Unit heading vector in the world frame (vehicle +x axis).
    pub fn forward(&self) -> Vec3 {
        self.rotation().column(0).into_owned()
    }

    /// Unit left vector in the world frame (vehicle +y axis).
    pub fn left(&self) -> Vec3 {
        self.rotation().column(1).into_owned()
    }
}

impl TryFrom<[f64; 6]> for Pose6D {
    type Error = GeometryError;

    fn try_from(a: [f64; 6]) -> Result<Self, Self::Error> {
        if a.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("pose"));
        }
        Ok(Pose6D::new(Vec3::new(a[0], a[1], a[2]), a[3], a[4], a[5]))
    }
}

impl From<Pose6D> for [f64; 6] {
    fn from(p: Pose6D) -> Self {
        [
            p.position.x,
            p.position.y,
            p.position.z,
            p.roll,
            p.pitch,
            p.yaw,
        ]
    }
}

/// Proper rigid motion `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RigidTransformRepr", into = "RigidTransformRepr")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigidTransformRepr {
    /// Row-major.
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl TryFrom<RigidTransformRepr> for RigidTransform {
    type Error = GeometryError;

    fn try_from(r: RigidTransformRepr) -> Result<Self, Self::Error> {
        let m = Matrix3::from_fn(|i, j| r.rotation[i][j]);
        let [x, y, z] = r.translation;
        RigidTransform::new(m, Vec3::new(x, y, z))
    }
}

impl From<RigidTransform> for RigidTransformRepr {
    fn from(t: RigidTransform) -> Self {
        let m = t.rotation;
        RigidTransformRepr {
            rotation: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self, GeometryError> {
        if rotation
            .iter()
            .chain(translation.iter())
            .any(|v| !v.is_finite())
        {
            return Err(GeometryError::NonFinite("transform"));
        }
        let err = (rotation.transpose() * rotation - Matrix3::identity())
            .abs()
            .max();
        if err > ORTHONORMAL_TOL || (rotation.determinant() - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(GeometryError::InvalidRotation);
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub fn rot_z(angle: f64) -> Self {
        Self {
            rotation: *Rotation3::from_axis_angle(&Vector3::z_axis(), angle).matrix(),
            translation: Vec3::zeros(),
        }
    }

    pub fn with_translation(mut self, t: Vec3) -> Self {
        self.translation = t;
        self
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn transform_point(t: &RigidTransform, p: &Vec3) -> Vec3 {
    t.transform_point(p)
}

/// Sub-pixel image location with the camera-frame depth of the source point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl PixelPoint {
    pub fn distance_to(&self, u: f64, v: f64) -> f64 {
        ((self.u - u).powi(2) + (self.v - v).powi(2)).sqrt()
    }
}

/// Axis-aligned pixel box. Serialized as `[x_min, y_min, x_max, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = GeometryError;

    fn try_from(a: [f64; 4]) -> Result<Self, Self::Error> {
        BoundingBox::new(a[0], a[1], a[2], a[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        let ok = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite())
            && x_min < x_max
            && y_min < y_max;
        if !ok {
            return Err(GeometryError::InvalidBox(x_min, y_min, x_max, y_max));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn from_center(cu: f64, cv: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(cu - w / 2.0, cv - h / 2.0, cu + w / 2.0, cv + h / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    #[inline]
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.x_min && u <= self.x_max && v >= self.y_min && v <= self.y_max
    }

    /// Shrinks each side by `fraction / 2` of the box extent, keeping the center.
    pub fn shrink(&self, fraction: f64) -> BoundingBox {
        let f = fraction.clamp(0.0, 0.999);
        let dx = 0.5 * f * self.width();
        let dy = 0.5 * f * self.height();
        BoundingBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max - dx,
            y_max: self.y_max - dy,
        }
    }

    /// Intersection with `[0, width] x [0, height]`; `None` if nothing is left.
    pub fn clip(&self, width: f64, height: f64) -> Option<BoundingBox> {
        BoundingBox::new(
            self.x_min.max(0.0),
            self.y_min.max(0.0),
            self.x_max.min(width),
            self.y_max.min(height),
        )
        .ok()
    }

    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x_min >= 0.0 && self.y_min >= 0.0 && self.x_max <= width && self.y_max <= height
    }

    /// Tight box around a set of pixel locations.
    pub fn enclosing<I: IntoIterator<Item = (f64, f64)>>(pts: I) -> Option<BoundingBox> {
        let mut it = pts.into_iter();
        let (u0, v0) = it.next()?;
        let (mut a, mut b, mut c, mut d) = (u0, v0, u0, v0);
        for (u, v) in it {
            a = a.min(u);
            b = b.min(v);
            c = c.max(u);
            d = d.max(v);
        }
        BoundingBox::new(a, b, c, d).ok()
    }
}

/// Distortion-free pinhole camera mounted on the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRepr", into = "CameraRepr")]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Camera pose in the vehicle frame (camera→vehicle).
    pub extrinsics: RigidTransform,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraRepr {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    extrinsics: RigidTransform,
}

impl TryFrom<CameraRepr> for CameraModel {
    type Error = GeometryError;

    fn try_from(r: CameraRepr) -> Result<Self, Self::Error> {
        CameraModel::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height, r.extrinsics)
    }
}

impl From<CameraModel> for CameraRepr {
    fn from(c: CameraModel) -> Self {
        CameraRepr {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            extrinsics: c.extrinsics,
        }
    }
}

/// Rotation taking camera axes (x right, y down, z forward) into vehicle axes
/// (x forward, y left, z up).
pub fn camera_to_vehicle_rotation() -> Matrix3<f64> {
    Matrix3::new(
        0.0, 0.0, 1.0, //
        -1.0, 0.0, 0.0, //
        0.0, -1.0, 0.0,
    )
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        extrinsics: RigidTransform,
    ) -> Result<Self, GeometryError> {
        if ![fx, fy, cx, cy].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("camera intrinsics"));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(GeometryError::InvalidCamera(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidCamera("empty image size".into()));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(GeometryError::InvalidCamera(format!(
                "principal point ({cx}, {cy}) outside {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            extrinsics,
        })
    }

    /// Square-pixel camera with the principal point at the image center.
    pub fn from_hfov(
        width: u32,
        height: u32,
        hfov_deg: f64,
        extrinsics: RigidTransform,
    ) -> Result<Self, GeometryError> {
        let f = (width as f64 / 2.0) / (hfov_deg.to_radians() / 2.0).tan();
        Self::new(
            f,
            f,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            extrinsics,
        )
    }

    /// Front-facing 1280x960 camera with 66 degrees of horizontal field of
    /// view, 1.5 m ahead of the vehicle origin at 1.7 m height.
    pub fn default_vehicle_camera() -> Self {
        let ext = RigidTransform {
            rotation: camera_to_vehicle_rotation(),
            translation: Vec3::new(1.5, 0.0, 1.7),
        };
        Self::from_hfov(1280, 960, 66.0, ext).expect("default camera is valid")
    }

    pub fn vehicle_to_camera(&self) -> RigidTransform {
        self.extrinsics.inverse()
    }

    /// World→camera transform for the vehicle at `pose`.
    pub fn world_to_camera(&self, pose: &Pose6D) -> RigidTransform {
        self.extrinsics
            .inverse()
            .compose(&pose.to_transform().inverse())
    }

    /// Pinhole projection of a camera-frame point. `None` when the point is
    /// behind the camera or lands outside `[0, width) x [0, height)`.
    #[inline]
    pub fn project(&self, p: &Vec3) -> Option<PixelPoint> {
        if !(p.z > 0.0) {
            return None;
        }
        let u = self.fx * p.x / p.z + self.cx;
        let v = self.fy * p.y / p.z + self.cy;
        if u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64 {
            Some(PixelPoint { u, v, depth: p.z })
        } else {
            None
        }
    }

    /// Same as [`project`](Self::project) but without the image-bounds check.
    #[inline]
    pub fn project_unbounded(&self, p: &Vec3) -> Option<(f64, f64)> {
        if !(p.z > 0.0) {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    pub fn gate_radius(&self, depth: f64, r_world: f64) -> Result<f64, GeometryError> {
        pixel_gate_radius(self, depth, r_world)
    }
}

pub fn project_to_image(cam: &CameraModel, p_camera: &Vec3) -> Option<PixelPoint> {
    cam.project(p_camera)
}

/// Pixel radius of a world-space sphere of radius `r_world` seen at `depth`,
/// using the larger focal length so the circle never under-covers the sphere.
pub fn pixel_gate_radius(
    cam: &CameraModel,
    depth: f64,
    r_world: f64,
) -> Result<f64, GeometryError> {
    if !(depth > 0.0) {
        return Err(GeometryError::NonPositiveDepth(depth));
    }
    Ok(cam.fx.max(cam.fy) * r_world / depth)
}
