use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::detection::{Detection, StateClass};
use crate::geometry::BoundingBox;
use crate::replay::GtDetection;

/// Intersection over union of two boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = w * h;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Outcome of matching one frame's detections against its ground truth.
/// Indices refer to the input slices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Matching {
    /// (detection, ground truth) pairs
    pub tp: Vec<(usize, usize)>,
    pub fp: Vec<usize>,
    pub fn_: Vec<usize>,
}

/// Greedy VOC matching: detections in descending confidence each take the
/// highest-IoU unmatched ground truth of their class, if that IoU reaches
/// `iou_threshold`.
pub fn match_detections(dets: &[Detection], gts: &[GtDetection], iou_threshold: f64) -> Matching {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .partial_cmp(&dets[a].confidence)
            .unwrap_or(Ordering::Equal)
    });
    let mut taken = vec![false; gts.len()];
    let mut m = Matching::default();
    for i in order {
        let d = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if taken[j] || g.class != d.class {
                continue;
            }
            let o = iou(&d.bbox, &g.bbox);
            if best.is_none_or(|(_, b)| o > b) {
                best = Some((j, o));
            }
        }
        match best {
            Some((j, o)) if o >= iou_threshold => {
                taken[j] = true;
                m.tp.push((i, j));
            }
            _ => m.fp.push(i),
        }
    }
    m.fn_ = (0..gts.len()).filter(|&j| !taken[j]).collect();
    m
}

/// One scored detection labeled true or false positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedMatch {
    pub confidence: f64,
    pub tp: bool,
}

fn pr_curve(ranked: &[RankedMatch], n_gt: usize) -> Vec<(f64, f64)> {
    let mut sorted = ranked.to_vec();
    sorted.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap_or(Ordering::Equal)
    });
    let (mut tp, mut fp) = (0usize, 0usize);
    sorted
        .iter()
        .map(|m| {
            if m.tp {
                tp += 1;
            } else {
                fp += 1;
            }
            (tp as f64 / n_gt as f64, tp as f64 / (tp + fp) as f64)
        })
        .collect()
}

/// 11-point interpolated average precision: the mean over recall levels
/// 0, 0.1, ..., 1 of the best precision reached at or beyond that recall.
/// Detections with equal confidence keep their input order.
pub fn voc2007_ap(ranked: &[RankedMatch], n_gt: usize) -> Result<f64, EvalError> {
    if n_gt == 0 {
        return Err(EvalError::NoGroundTruth);
    }
    let curve = pr_curve(ranked, n_gt);
    let mut sum = 0.0;
    for i in 0..=10 {
        let level = i as f64 / 10.0;
        let p = curve
            .iter()
            .filter(|(r, _)| *r >= level)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        sum += p;
    }
    Ok(sum / 11.0)
}

/// Area under the monotone precision envelope (VOC 2010 and later).
pub fn all_points_ap(ranked: &[RankedMatch], n_gt: usize) -> Result<f64, EvalError> {
    if n_gt == 0 {
        return Err(EvalError::NoGroundTruth);
    }
    let curve = pr_curve(ranked, n_gt);
    let mut rec = vec![0.0];
    let mut prec = vec![0.0];
    for (r, p) in &curve {
        rec.push(*r);
        prec.push(*p);
    }
    rec.push(1.0);
    prec.push(0.0);
    for i in (0..prec.len() - 1).rev() {
        prec[i] = prec[i].max(prec[i + 1]);
    }
    Ok((1..rec.len())
        .map(|i| (rec[i] - rec[i - 1]) * prec[i])
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub ap: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub gt: usize,
    pub tp: usize,
    pub fp: usize,
}

/// Per-class detection scores over a set of frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionScores {
    pub tau: f64,
    pub iou_threshold: f64,
    pub red: ClassScores,
    pub green: ClassScores,
    /// Mean AP over classes that have ground truth.
    pub map: Option<f64>,
}

/// Accumulates matches across frames for AP and thresholded
/// precision/recall.
#[derive(Debug, Clone, Default)]
pub struct DetectionEval {
    ranked: [Vec<RankedMatch>; 2],
    gt: [usize; 2],
}

fn slot(c: StateClass) -> usize {
    match c {
        StateClass::Red => 0,
        StateClass::Green => 1,
    }
}

impl DetectionEval {
    pub fn new() -> Self {
        Self::default()
    }

    /// `dets` is the raw (unthresholded) output for the frame.
    pub fn add_frame(&mut self, dets: &[Detection], gts: &[GtDetection], iou_threshold: f64) {
        let m = match_detections(dets, gts, iou_threshold);
        for g in gts {
            self.gt[slot(g.class)] += 1;
        }
        for &(i, _) in &m.tp {
            self.ranked[slot(dets[i].class)].push(RankedMatch {
                confidence: dets[i].confidence,
                tp: true,
            });
        }
        for &i in &m.fp {
            self.ranked[slot(dets[i].class)].push(RankedMatch {
                confidence: dets[i].confidence,
                tp: false,
            });
        }
    }

    pub fn ranked(&self, class: StateClass) -> &[RankedMatch] {
        &self.ranked[slot(class)]
    }

    pub fn gt_count(&self, class: StateClass) -> usize {
        self.gt[slot(class)]
    }

    /// Scores at confidence threshold `tau`. AP uses every detection.
    /// Matching happens before thresholding, which is equivalent to matching
    /// the thresholded set because the greedy pass is confidence-ordered.
    pub fn scores(&self, tau: f64, iou_threshold: f64) -> DetectionScores {
        let class = |c: StateClass| {
            let ranked = self.ranked(c);
            let gt = self.gt_count(c);
            let kept = ranked.iter().filter(|m| m.confidence >= tau);
            let (tp, fp) = kept.fold(
                (0, 0),
                |(tp, fp), m| if m.tp { (tp + 1, fp) } else { (tp, fp + 1) },
            );
            ClassScores {
                ap: voc2007_ap(ranked, gt).ok(),
                precision: if tp + fp == 0 {
                    0.0
                } else {
                    tp as f64 / (tp + fp) as f64
                },
                recall: if gt == 0 { 0.0 } else { tp as f64 / gt as f64 },
                gt,
                tp,
                fp,
            }
        };
        let red = class(StateClass::Red);
        let green = class(StateClass::Green);
        DetectionScores {
            tau,
            iou_threshold,
            red,
            green,
            map: mean_ap(&[("red", red.ap), ("green", green.ap)]),
        }
    }
}

/// Unweighted mean of the defined per-class APs. Classes without ground
/// truth are skipped with a warning.
pub fn mean_ap(per_class: &[(&str, Option<f64>)]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0;
    for (name, ap) in per_class {
        match ap {
            Some(v) => {
                sum += v;
                n += 1;
            }
            None => log::warn!("class {name} has no ground truth; excluded from mAP"),
        }
    }
    (n > 0).then(|| sum / n as f64)
}
