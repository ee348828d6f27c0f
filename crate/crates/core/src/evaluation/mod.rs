//! Detection metrics (IoU matching, precision/recall, VOC AP) and system
//! metrics (confusion matrices, first correct detection, timelines).

mod detection;
mod report;
mod system;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use detection::{
    all_points_ap, iou, match_detections, mean_ap, voc2007_ap, ClassScores, DetectionEval,
    DetectionScores, Matching, RankedMatch,
};
pub use report::{align, timeline_csv, Report, RunReport, ALIGN_TOLERANCE};
pub use system::{confusion, early_detection, ConfusionMatrix, EarlyDetectionRecord};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("class has no ground truth; AP is undefined")]
    NoGroundTruth,
    #[error("{predictions} predictions for {truth} ground-truth frames")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("verdict at t={verdict_t} does not line up with truth at t={truth_t}")]
    Misaligned { verdict_t: f64, truth_t: f64 },
    #[error("invalid eval config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub tau: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            tau: 0.5,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(EvalError::InvalidConfig(format!(
                "iou_threshold must be in (0, 1], got {}",
                self.iou_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(EvalError::InvalidConfig(format!(
                "tau must be in [0, 1], got {}",
                self.tau
            )));
        }
        Ok(())
    }
}
