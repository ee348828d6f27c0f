use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    confusion, early_detection, ConfusionMatrix, DetectionScores, EarlyDetectionRecord, EvalError,
};
use crate::recognition::{FinalState, VerdictRecord};
use crate::replay::TruthFrame;

/// Timestamps of verdicts and truth must agree this closely (seconds).
pub const ALIGN_TOLERANCE: f64 = 1e-6;

/// Predicted states aligned to the truth frames.
pub fn align(
    verdicts: &[VerdictRecord],
    truth: &[TruthFrame],
) -> Result<Vec<FinalState>, EvalError> {
    if verdicts.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            predictions: verdicts.len(),
            truth: truth.len(),
        });
    }
    verdicts
        .iter()
        .zip(truth)
        .map(|(v, f)| {
            if (v.t - f.t).abs() > ALIGN_TOLERANCE {
                Err(EvalError::Misaligned {
                    verdict_t: v.t,
                    truth_t: f.t,
                })
            } else {
                Ok(v.state)
            }
        })
        .collect()
}

/// System-level results for one verdict stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label: String,
    pub frames: usize,
    pub accuracy: Option<f64>,
    /// Accuracy over frames whose ground truth is RED or GREEN.
    pub lit_accuracy: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub early: Vec<EarlyDetectionRecord>,
    pub mean_delay: Option<f64>,
    pub mean_distance: Option<f64>,
}

impl RunReport {
    pub fn new(
        log_id: &str,
        label: &str,
        preds: &[FinalState],
        truth: &[TruthFrame],
    ) -> Result<Self, EvalError> {
        let gts: Vec<FinalState> = truth.iter().map(|f| f.gt_state).collect();
        let cm = confusion(preds, &gts)?;
        let early = early_detection(log_id, preds, truth)?;
        let ok: Vec<_> = early.iter().filter(|r| !r.flagged).collect();
        let mean = |f: fn(&EarlyDetectionRecord) -> f64| {
            (!ok.is_empty()).then(|| ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64)
        };
        Ok(Self {
            label: label.to_string(),
            frames: preds.len(),
            accuracy: cm.accuracy(),
            lit_accuracy: cm.accuracy_over(&[FinalState::Red, FinalState::Green]),
            confusion: cm,
            mean_delay: mean(|r| r.delay),
            mean_distance: mean(|r| r.distance),
            early,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub log_id: String,
    pub runs: Vec<RunReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub detection: Vec<DetectionScores>,
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or("-".into(), |x| format!("{x:.prec$}"))
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable tables: detector scores, first correct detections
    /// and one confusion matrix per run.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if !self.detection.is_empty() {
            let _ = writeln!(s, "Detection (IoU {})", self.detection[0].iou_threshold);
            let _ = writeln!(
                s,
                "{:>6} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
                "tau", "AP red", "AP green", "mAP", "P red", "R red", "P green", "R green"
            );
            for d in &self.detection {
                let _ = writeln!(
                    s,
                    "{:>6.2} {:>8} {:>8} {:>8} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                    d.tau,
                    opt(d.red.ap, 4),
                    opt(d.green.ap, 4),
                    opt(d.map, 4),
                    d.red.precision,
                    d.red.recall,
                    d.green.precision,
                    d.green.recall
                );
            }
            s.push('\n');
        }
        let _ = writeln!(s, "First correct detections ({})", self.log_id);
        let _ = writeln!(
            s,
            "{:<12} {:<12} {:>9} {:>9} {:>12}",
            "run", "group", "entry(s)", "delay(s)", "distance(m)"
        );
        for r in &self.runs {
            for e in &r.early {
                let mark = if e.flagged { " *" } else { "" };
                let _ = writeln!(
                    s,
                    "{:<12} {:<12} {:>9.2} {:>9.2} {:>12.2}{mark}",
                    r.label, e.group, e.entry_t, e.delay, e.distance
                );
            }
            let _ = writeln!(
                s,
                "{:<12} {:<12} {:>9} {:>9} {:>12}",
                r.label,
                "mean",
                "",
                opt(r.mean_delay, 2),
                opt(r.mean_distance, 2)
            );
        }
        s += "(* no correct prediction during the approach)\n";
        for r in &self.runs {
            let _ = writeln!(
                s,
                "\nConfusion matrix {} ({} frames, accuracy {}, red/green accuracy {})",
                r.label,
                r.frames,
                opt(r.accuracy, 4),
                opt(r.lit_accuracy, 4)
            );
            s += &r.confusion.to_text();
        }
        s
    }
}

/// CSV with one row per frame: `t,gt,pred_<label>...`.
pub fn timeline_csv(
    truth: &[TruthFrame],
    runs: &[(&str, &[FinalState])],
) -> Result<String, EvalError> {
    for (_, p) in runs {
        if p.len() != truth.len() {
            return Err(EvalError::LengthMismatch {
                predictions: p.len(),
                truth: truth.len(),
            });
        }
    }
    let mut s = String::from("t,gt");
    for (label, _) in runs {
        let _ = write!(s, ",pred_{label}");
    }
    s.push('\n');
    for (k, f) in truth.iter().enumerate() {
        let _ = write!(s, "{},{}", f.t, f.gt_state.as_str());
        for (_, p) in runs {
            let _ = write!(s, ",{}", p[k].as_str());
        }
        s.push('\n');
    }
    Ok(s)
}
