//! Two-class traffic light detections and the detector backends.
//!
//! A [`Detector`] turns a [`LogFrame`] into boxes sorted by descending
//! confidence. Two backends ship here: [`ScriptedDetector`], which perturbs
//! the frame's ground-truth boxes under a seeded [`NoiseModel`], and
//! [`RemoteDetector`], which posts the frame image to an HTTP model server.

mod remote;
mod scripted;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BoundingBox;
use crate::replay::LogFrame;

pub use remote::{timeout_from_env, RemoteDetector, DEFAULT_TIMEOUT_MS, TIMEOUT_ENV};
pub use scripted::{size_pool, ConfidenceBeta, NoiseModel, ScriptedDetector};

/// Detector output class. Yellow lights are reported as `Red`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateClass {
    Red,
    Green,
}

impl StateClass {
    pub const ALL: [StateClass; 2] = [StateClass::Red, StateClass::Green];

    pub fn as_str(&self) -> &'static str {
        match self {
            StateClass::Red => "red",
            StateClass::Green => "green",
        }
    }
}

impl fmt::Display for StateClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StateClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "red" => Ok(StateClass::Red),
            "green" => Ok(StateClass::Green),
            other => Err(format!("unknown class {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("detector unavailable: {0}")]
    DetectorUnavailable(String),
    #[error("frame at t={0} has no image reference")]
    MissingImage(f64),
    #[error("cannot read image {path}: {source}")]
    Image {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid detection: {0}")]
    Invalid(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
}

/// A classed, scored pixel box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DetectionRepr", into = "DetectionRepr")]
pub struct Detection {
    pub bbox: BoundingBox,
    pub class: StateClass,
    pub confidence: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionRepr {
    bbox: BoundingBox,
    class: StateClass,
    confidence: f64,
}

impl TryFrom<DetectionRepr> for Detection {
    type Error = DetectionError;

    fn try_from(r: DetectionRepr) -> Result<Self, Self::Error> {
        Detection::new(r.bbox, r.class, r.confidence)
    }
}

impl From<Detection> for DetectionRepr {
    fn from(d: Detection) -> Self {
        DetectionRepr {
            bbox: d.bbox,
            class: d.class,
            confidence: d.confidence,
        }
    }
}

impl Detection {
    pub fn new(
        bbox: BoundingBox,
        class: StateClass,
        confidence: f64,
    ) -> Result<Self, DetectionError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(DetectionError::Invalid(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self {
            bbox,
            class,
            confidence,
        })
    }
}

pub trait Detector {
    /// Detections for one frame, sorted by descending confidence.
    fn detect(&self, frame: &LogFrame) -> Result<Vec<Detection>, DetectionError>;
}

impl<D: Detector + ?Sized> Detector for &D {
    fn detect(&self, frame: &LogFrame) -> Result<Vec<Detection>, DetectionError> {
        (**self).detect(frame)
    }
}

impl<D: Detector + ?Sized> Detector for Box<D> {
    fn detect(&self, frame: &LogFrame) -> Result<Vec<Detection>, DetectionError> {
        (**self).detect(frame)
    }
}

/// Stable sort by descending confidence.
pub fn sort_by_confidence(dets: &mut [Detection]) {
    dets.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap_or(Ordering::Equal)
    });
}

/// Keeps detections with `confidence >= tau`, preserving order.
pub fn filter_by_confidence(dets: &[Detection], tau: f64) -> Vec<Detection> {
    dets.iter()
        .filter(|d| d.confidence >= tau)
        .copied()
        .collect()
}

/// One frame of raw detector output, a line of the detections file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameDetections {
    pub t: f64,
    pub detections: Vec<Detection>,
}

/// Writes one JSON object per frame.
pub fn write_detections<W: std::io::Write>(
    mut out: W,
    frames: &[FrameDetections],
) -> std::io::Result<()> {
    for f in frames {
        serde_json::to_writer(&mut out, f)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads a detections file; errors carry the 1-based line number.
pub fn read_detections<R: std::io::BufRead>(
    input: R,
) -> Result<Vec<FrameDetections>, DetectionError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| DetectionError::Invalid(format!("line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let f = serde_json::from_str(&line)
            .map_err(|e| DetectionError::Invalid(format!("line {}: {e}", i + 1)))?;
        out.push(f);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(conf: f64) -> Detection {
        Detection::new(
            BoundingBox::new(0.0, 0.0, 5.0, 10.0).unwrap(),
            StateClass::Red,
            conf,
        )
        .unwrap()
    }

    #[test]
    fn threshold_straddle() {
        let d = vec![det(0.6), det(0.4)];
        let kept = filter_by_confidence(&d, 0.5);
        assert_eq!(kept, vec![det(0.6)]);
        assert_eq!(filter_by_confidence(&d, 0.0), d);
        // boundary is inclusive
        assert_eq!(filter_by_confidence(&[det(0.5)], 0.5).len(), 1);
    }

    #[test]
    fn rejects_bad_confidence() {
        let b = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(Detection::new(b, StateClass::Green, 1.2).is_err());
        assert!(Detection::new(b, StateClass::Green, -0.1).is_err());
        assert!(Detection::new(b, StateClass::Green, f64::NAN).is_err());
        let js = r#"{"bbox":[0,0,1,1],"class":"green","confidence":1.5}"#;
        assert!(serde_json::from_str::<Detection>(js).is_err());
        let js = r#"{"bbox":[0,0,1,1],"class":"yellow","confidence":0.5}"#;
        assert!(serde_json::from_str::<Detection>(js).is_err());
    }

    #[test]
    fn detections_file_round_trip() {
        let frames = vec![
            FrameDetections {
                t: 0.0625,
                detections: vec![det(0.9), det(0.1)],
            },
            FrameDetections {
                t: 0.125,
                detections: vec![],
            },
        ];
        let mut buf = Vec::new();
        write_detections(&mut buf, &frames).unwrap();
        assert_eq!(read_detections(&buf[..]).unwrap(), frames);
        let err = read_detections(&b"{\"t\":0,\"detections\":[]}\nnope\n"[..]).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn wire_format() {
        let s = serde_json::to_string(&det(0.25)).unwrap();
        assert_eq!(
            s,
            r#"{"bbox":[0.0,0.0,5.0,10.0],"class":"red","confidence":0.25}"#
        );
    }

    proptest! {
        #[test]
        fn higher_threshold_keeps_subset(confs in prop::collection::vec(0.0f64..=1.0, 0..40), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let d: Vec<_> = confs.iter().map(|&c| det(c)).collect();
            let strict = filter_by_confidence(&d, hi);
            let loose = filter_by_confidence(&d, lo);
            prop_assert!(strict.len() <= loose.len());
            // order-preserving subsequence
            let mut it = loose.iter();
            for s in &strict {
                prop_assert!(it.any(|l| l == s));
            }
            prop_assert!(strict.iter().all(|x| x.confidence >= hi));
        }
    }
}
