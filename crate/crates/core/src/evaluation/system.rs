use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::recognition::FinalState;
use crate::replay::TruthFrame;

fn idx(s: FinalState) -> usize {
    match s {
        FinalState::None => 0,
        FinalState::Red => 1,
        FinalState::Green => 2,
        FinalState::Off => 3,
    }
}

/// Frame counts indexed by (ground truth, prediction) in NONE, RED, GREEN,
/// OFF order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn add(&mut self, gt: FinalState, pred: FinalState) {
        self.counts[idx(gt)][idx(pred)] += 1;
    }

    pub fn get(&self, gt: FinalState, pred: FinalState) -> u64 {
        self.counts[idx(gt)][idx(pred)]
    }

    pub fn row(&self, gt: FinalState) -> [u64; 4] {
        self.counts[idx(gt)]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..4).map(|i| self.counts[i][i]).sum()
    }

    /// Fraction of all frames predicted correctly.
    pub fn accuracy(&self) -> Option<f64> {
        let t = self.total();
        (t > 0).then(|| self.correct() as f64 / t as f64)
    }

    /// Accuracy restricted to frames whose ground truth is one of `rows`.
    pub fn accuracy_over(&self, rows: &[FinalState]) -> Option<f64> {
        let (mut hit, mut n) = (0, 0);
        for &r in rows {
            hit += self.get(r, r);
            n += self.row(r).iter().sum::<u64>();
        }
        (n > 0).then(|| hit as f64 / n as f64)
    }

    /// Aligned text table, one row per ground-truth state.
    pub fn to_text(&self) -> String {
        let mut s = format!("{:<8}", "GT\\PRED");
        for p in FinalState::ALL {
            s += &format!("{:>8}", p.as_str().to_uppercase());
        }
        s.push('\n');
        for g in FinalState::ALL {
            s += &format!("{:<8}", g.as_str().to_uppercase());
            for c in self.row(g) {
                s += &format!("{c:>8}");
            }
            s.push('\n');
        }
        s
    }
}

pub fn confusion(preds: &[FinalState], gts: &[FinalState]) -> Result<ConfusionMatrix, EvalError> {
    if preds.len() != gts.len() {
        return Err(EvalError::LengthMismatch {
            predictions: preds.len(),
            truth: gts.len(),
        });
    }
    let mut m = ConfusionMatrix::default();
    for (p, g) in preds.iter().zip(gts) {
        m.add(*g, *p);
    }
    Ok(m)
}

/// First correct prediction during one approach to a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyDetectionRecord {
    pub log_id: String,
    pub group: String,
    /// seconds
    pub entry_t: f64,
    /// Seconds from range entry to the first correct prediction.
    pub delay: f64,
    /// Meters to the group's nearest light at that frame.
    pub distance: f64,
    /// No correct prediction during the approach.
    pub flagged: bool,
}

/// One record per approach, an approach being a maximal run of frames with
/// the same active group in the truth. A prediction is correct when it
/// equals a RED or GREEN ground truth. Approaches without any correct frame
/// are flagged with delay equal to the approach duration and distance 0.
pub fn early_detection(
    log_id: &str,
    preds: &[FinalState],
    truth: &[TruthFrame],
) -> Result<Vec<EarlyDetectionRecord>, EvalError> {
    if preds.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            predictions: preds.len(),
            truth: truth.len(),
        });
    }
    let mut out = Vec::new();
    let mut i = 0;
    while i < truth.len() {
        let Some(group) = &truth[i].group else {
            i += 1;
            continue;
        };
        let start = i;
        while i < truth.len() && truth[i].group.as_ref() == Some(group) {
            i += 1;
        }
        let run = start..i;
        let entry_t = truth[start].t;
        let first = run.clone().find(|&k| {
            matches!(truth[k].gt_state, FinalState::Red | FinalState::Green)
                && preds[k] == truth[k].gt_state
        });
        out.push(match first {
            Some(k) => EarlyDetectionRecord {
                log_id: log_id.to_string(),
                group: group.clone(),
                entry_t,
                delay: truth[k].t - entry_t,
                distance: truth[k].distance.unwrap_or(0.0),
                flagged: false,
            },
            None => EarlyDetectionRecord {
                log_id: log_id.to_string(),
                group: group.clone(),
                entry_t,
                delay: truth[i - 1].t - entry_t,
                distance: 0.0,
                flagged: true,
            },
        });
    }
    Ok(out)
}
