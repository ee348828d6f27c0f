use std::path::{Path, PathBuf};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{sort_by_confidence, Detection, DetectionError, Detector, StateClass};
use crate::geometry::BoundingBox;
use crate::replay::LogFrame;

pub const TIMEOUT_ENV: &str = "TLR_DETECTOR_TIMEOUT_MS";
pub const DEFAULT_TIMEOUT_MS: u64 = 500;

/// Reads the request timeout from `TLR_DETECTOR_TIMEOUT_MS`, falling back to 500 ms.
pub fn timeout_from_env() -> Duration {
    let ms = std::env::var(TIMEOUT_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<u64>().ok())
        .unwrap_or(DEFAULT_TIMEOUT_MS);
    Duration::from_millis(ms)
}

#[derive(Serialize)]
struct DetectRequest<'a> {
    image_b64: &'a str,
    tau: f64,
}

#[derive(Deserialize)]
struct DetectResponse {
    detections: Vec<RawDetection>,
}

// Parsed loosely so one malformed entry does not poison the whole response.
#[derive(Deserialize)]
struct RawDetection {
    bbox: Vec<f64>,
    class: String,
    confidence: f64,
}

/// HTTP client for a model server speaking `POST /detect`.
///
/// Responses are sanitized: boxes are clipped to the image, and entries
/// with unknown classes, out-of-range confidences or degenerate boxes are
/// dropped.
#[derive(Debug, Clone)]
pub struct RemoteDetector {
    url: String,
    tau: f64,
    width: f64,
    height: f64,
    image_root: Option<PathBuf>,
    client: reqwest::blocking::Client,
}

impl RemoteDetector {
    /// `base_url` is the server root; `/detect` is appended.
    pub fn new(
        base_url: &str,
        tau: f64,
        width: u32,
        height: u32,
        timeout: Duration,
    ) -> Result<Self, DetectionError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| DetectionError::DetectorUnavailable(e.to_string()))?;
        Ok(Self {
            url: format!("{}/detect", base_url.trim_end_matches('/')),
            tau,
            width: width as f64,
            height: height as f64,
            image_root: None,
            client,
        })
    }

    /// Relative `image_ref`s are resolved against `root` (usually the log's directory).
    pub fn with_image_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.image_root = Some(root.into());
        self
    }

    fn resolve(&self, image_ref: &str) -> PathBuf {
        let p = Path::new(image_ref);
        match &self.image_root {
            Some(root) if p.is_relative() => root.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn sanitize(&self, raw: RawDetection) -> Option<Detection> {
        let class: StateClass = raw.class.parse().ok()?;
        let [a, b, c, d] = <[f64; 4]>::try_from(raw.bbox.as_slice()).ok()?;
        let bbox = BoundingBox::new(a, b, c, d)
            .ok()?
            .clip(self.width, self.height)?;
        Detection::new(bbox, class, raw.confidence).ok()
    }
}

impl Detector for RemoteDetector {
    fn detect(&self, frame: &LogFrame) -> Result<Vec<Detection>, DetectionError> {
        let image_ref = frame
            .image_ref
            .as_deref()
            .ok_or(DetectionError::MissingImage(frame.t))?;
        let path = self.resolve(image_ref);
        let bytes = std::fs::read(&path).map_err(|source| DetectionError::Image {
            path: path.display().to_string(),
            source,
        })?;
        let image_b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
        let resp = self
            .client
            .post(&self.url)
            .json(&DetectRequest {
                image_b64: &image_b64,
                tau: self.tau,
            })
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| DetectionError::DetectorUnavailable(e.to_string()))?;
        let body: DetectResponse = resp
            .json()
            .map_err(|e| DetectionError::DetectorUnavailable(format!("bad response: {e}")))?;
        let mut out: Vec<Detection> = body
            .detections
            .into_iter()
            .filter_map(|r| self.sanitize(r))
            .collect();
        sort_by_confidence(&mut out);
        Ok(out)
    }
}
