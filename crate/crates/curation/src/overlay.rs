use std::io::Cursor;

use image::{ImageFormat, Rgb, RgbImage};
use tlr_core::geometry::{CameraModel, Vec3};
use tlr_core::mapping::{CandidateStatus, TLCandidate};
use tlr_core::replay::LogFrame;

/// Overlay pixels per camera pixel.
pub const OVERLAY_SCALE: f64 = 0.5;

const SKY: Rgb<u8> = Rgb([196, 206, 222]);
const GROUND: Rgb<u8> = Rgb([84, 86, 92]);
const BOX: Rgb<u8> = Rgb([255, 255, 255]);

fn status_color(s: CandidateStatus) -> Rgb<u8> {
    match s {
        CandidateStatus::Pending => Rgb([255, 196, 0]),
        CandidateStatus::Accepted => Rgb([0, 200, 80]),
        CandidateStatus::Rejected => Rgb([220, 40, 40]),
    }
}

struct Canvas {
    img: RgbImage,
}

impl Canvas {
    fn put(&mut self, x: i64, y: i64, c: Rgb<u8>) {
        if x >= 0 && y >= 0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
            self.img.put_pixel(x as u32, y as u32, c);
        }
    }

    fn hline(&mut self, x0: i64, x1: i64, y: i64, c: Rgb<u8>) {
        for x in x0.min(x1)..=x0.max(x1) {
            self.put(x, y, c);
        }
    }

    fn vline(&mut self, x: i64, y0: i64, y1: i64, c: Rgb<u8>) {
        for y in y0.min(y1)..=y0.max(y1) {
            self.put(x, y, c);
        }
    }

    fn cross(&mut self, x: i64, y: i64, arm: i64, thick: i64, c: Rgb<u8>) {
        for d in -(thick / 2)..=(thick - 1) / 2 {
            self.hline(x - arm, x + arm, y + d, c);
            self.vline(x + d, y - arm, y + arm, c);
        }
    }
}

/// Schematic view of one frame: sky/ground split at the horizon, the
/// frame's LiDAR points shaded by depth, ground-truth detection boxes, and
/// a cross at each candidate centroid colored by status. `highlight` gets a
/// larger cross.
pub fn render_overlay(
    frame: &LogFrame,
    candidates: &[&TLCandidate],
    cam: &CameraModel,
    highlight: Option<&str>,
) -> Vec<u8> {
    let s = OVERLAY_SCALE;
    let (w, h) = (
        (cam.width as f64 * s).round() as u32,
        (cam.height as f64 * s).round() as u32,
    );
    let to_cam = cam.world_to_camera(&frame.pose);

    // horizon: image row of a far point level with the camera
    let cam_world = frame
        .pose
        .to_transform()
        .transform_point(cam.extrinsics.translation());
    let fwd = frame.pose.forward();
    let flat = Vec3::new(fwd.x, fwd.y, 0.0)
        .try_normalize(1e-9)
        .unwrap_or(Vec3::x());
    let horizon = cam
        .project_unbounded(&to_cam.transform_point(&(cam_world + flat * 1e5)))
        .map_or(h as f64, |(_, v)| v * s);
    let mut canvas = Canvas {
        img: RgbImage::from_fn(w, h, |_, y| if (y as f64) < horizon { SKY } else { GROUND }),
    };

    let v2c = cam.vehicle_to_camera();
    for p in &frame.lidar {
        if let Some(px) = cam.project(&v2c.transform_point(p)) {
            let i = (1.0 - px.depth / 80.0).clamp(0.15, 1.0);
            let c = Rgb([
                (70.0 + 185.0 * i) as u8,
                (40.0 + 140.0 * i) as u8,
                (40.0 * i) as u8,
            ]);
            canvas.put((px.u * s) as i64, (px.v * s) as i64, c);
        }
    }

    for d in &frame.gt_detections {
        let b = &d.bbox;
        let (x0, y0, x1, y1) = (
            (b.x_min * s) as i64,
            (b.y_min * s) as i64,
            (b.x_max * s) as i64,
            (b.y_max * s) as i64,
        );
        canvas.hline(x0, x1, y0, BOX);
        canvas.hline(x0, x1, y1, BOX);
        canvas.vline(x0, y0, y1, BOX);
        canvas.vline(x1, y0, y1, BOX);
    }

    // highlighted candidate drawn last so it stays on top
    let mut ordered: Vec<&&TLCandidate> = candidates.iter().collect();
    ordered.sort_by_key(|c| Some(c.id.as_str()) == highlight);
    for c in ordered {
        if let Some(px) = cam.project(&to_cam.transform_point(&c.centroid)) {
            let big = Some(c.id.as_str()) == highlight;
            let (arm, thick) = if big { (12, 3) } else { (6, 1) };
            canvas.cross(
                (px.u * s) as i64,
                (px.v * s) as i64,
                arm,
                thick,
                status_color(c.status),
            );
        }
    }

    let mut out = Cursor::new(Vec::new());
    canvas
        .img
        .write_to(&mut out, ImageFormat::Png)
        .expect("png encoding into memory");
    out.into_inner()
}
