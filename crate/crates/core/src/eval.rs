//! Detection metrics over polygon slots.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::PolygonSlot;
use crate::iou::polygon_iou_exact;
use crate::scalar::Scalar;

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

pub const RECALL_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    /// `(pred index, gt index, IoU)` in matching order.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

impl MatchResult {
    pub fn is_matched_pred(&self, pred: usize) -> bool {
        self.pairs.iter().any(|p| p.0 == pred)
    }
}

/// Indices sorted by descending confidence, stable for ties.
fn by_confidence<T: Scalar>(slots: &[PolygonSlot<T>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..slots.len()).collect();
    idx.sort_by(|&a, &b| {
        slots[b]
            .confidence
            .partial_cmp(&slots[a].confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    idx
}

/// Greedy matching: predictions in descending confidence each take the
/// unmatched ground truth of highest IoU, if that IoU reaches the threshold.
pub fn match_frame<T: Scalar>(
    preds: &[PolygonSlot<T>],
    gts: &[PolygonSlot<T>],
    iou_threshold: f64,
) -> Result<MatchResult> {
    let ious = iou_matrix(preds, gts)?;
    Ok(match_with(&ious, preds, gts.len(), iou_threshold))
}

fn iou_matrix<T: Scalar>(
    preds: &[PolygonSlot<T>],
    gts: &[PolygonSlot<T>],
) -> Result<Vec<Vec<f64>>> {
    preds
        .iter()
        .map(|p| {
            gts.iter()
                .map(|g| polygon_iou_exact(p, g).map(|v| v.to_f64_lossy()))
                .collect()
        })
        .collect()
}

fn match_with<T: Scalar>(
    ious: &[Vec<f64>],
    preds: &[PolygonSlot<T>],
    n_gt: usize,
    iou_threshold: f64,
) -> MatchResult {
    let mut gt_taken = vec![false; n_gt];
    let mut out = MatchResult::default();
    for p in by_confidence(preds) {
        let best = (0..n_gt)
            .filter(|&g| !gt_taken[g] && ious[p][g] >= iou_threshold)
            .fold(None, |best: Option<usize>, g| match best {
                Some(b) if ious[p][b] >= ious[p][g] => Some(b),
                _ => Some(g),
            });
        match best {
            Some(g) => {
                gt_taken[g] = true;
                out.pairs.push((p, g, ious[p][g]));
            }
            None => out.unmatched_preds.push(p),
        }
    }
    out.unmatched_preds.sort_unstable();
    out.unmatched_gts = (0..n_gt).filter(|&g| !gt_taken[g]).collect();
    out
}

/// Index of the gt corner nearest to each predicted corner.
fn nearest_corners<T: Scalar>(pred: &PolygonSlot<T>, gt: &PolygonSlot<T>) -> [usize; 4] {
    pred.corners.map(|p| {
        (0..4)
            .min_by(|&a, &b| {
                p.distance(gt.corners[a])
                    .partial_cmp(&p.distance(gt.corners[b]))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("four corners")
    })
}

fn wrap_degrees(d: f64) -> f64 {
    let r = d.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Whether the prediction's entrance corners land on the gt's entrance
/// corners (entrance-left on entrance-left, entrance-right on
/// entrance-right) and the entrance angles agree within `angle_tol_deg`.
pub fn entrance_correct<T: Scalar>(
    pred: &PolygonSlot<T>,
    gt: &PolygonSlot<T>,
    angle_tol_deg: f64,
) -> bool {
    let nearest = nearest_corners(pred, gt);
    if nearest[0] != 0 || nearest[1] != 1 {
        return false;
    }
    match (pred.entrance_angle(), gt.entrance_angle()) {
        (Ok(a), Ok(b)) => wrap_degrees(a.to_f64_lossy() - b.to_f64_lossy()).abs() <= angle_tol_deg,
        _ => false,
    }
}

/// Fraction of matched pairs with a correct entrance line; 0 without pairs.
pub fn entrance_accuracy<T: Scalar>(
    matches: &MatchResult,
    preds: &[PolygonSlot<T>],
    gts: &[PolygonSlot<T>],
    angle_tol_deg: f64,
) -> f64 {
    if matches.pairs.is_empty() {
        return 0.0;
    }
    let ok = matches
        .pairs
        .iter()
        .filter(|&&(p, g, _)| entrance_correct(&preds[p], &gts[g], angle_tol_deg))
        .count();
    ok as f64 / matches.pairs.len() as f64
}

/// Predictions and ground truth of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalFrame<T> {
    pub preds: Vec<PolygonSlot<T>>,
    pub gts: Vec<PolygonSlot<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Predictions below this confidence are ignored for P/R/F1.
    pub conf_threshold: f64,
    /// IoU threshold for P/R/F1 and entrance accuracy.
    pub iou_threshold: f64,
    pub angle_tol_deg: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            conf_threshold: 0.25,
            iou_threshold: 0.5,
            angle_tol_deg: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub entrance_correct: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// False when there were no predictions above the confidence threshold.
    pub precision_defined: bool,
    /// False when there was no ground truth at all.
    pub recall_defined: bool,
    /// `(IoU threshold, AP)` for 0.50..=0.95.
    pub ap_per_threshold: Vec<(f64, f64)>,
    pub map_50: f64,
    pub map_50_95: f64,
    /// Correct-entrance fraction of the P/R/F1 matches.
    pub entrance_accuracy: f64,
    pub totals: FrameCounts,
    pub per_frame: Vec<FrameCounts>,
}

impl EvalReport {
    pub fn ap_at(&self, threshold: f64) -> Option<f64> {
        self.ap_per_threshold
            .iter()
            .find(|(t, _)| (t - threshold).abs() < 1e-9)
            .map(|&(_, ap)| ap)
    }
}

/// One scored detection for the PR sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredDetection {
    pub confidence: f64,
    pub true_positive: bool,
}

/// Precision/recall after each distinct confidence level (ties enter the
/// curve together), highest confidence first.
pub fn pr_curve(detections: &[ScoredDetection], num_gt: usize) -> Vec<(f64, f64)> {
    let mut det = detections.to_vec();
    det.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < det.len() {
        let c = det[i].confidence;
        while i < det.len() && det[i].confidence == c {
            if det[i].true_positive {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((tp as f64 / (tp + fp) as f64, tp as f64 / num_gt as f64));
    }
    out
}

/// 101-point interpolated average precision.
pub fn average_precision(detections: &[ScoredDetection], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let curve = pr_curve(detections, num_gt);
    // precision envelope: best precision at any recall >= r
    let mut envelope = curve.clone();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i].0 = envelope[i].0.max(envelope[i + 1].0);
    }
    let mut sum = 0.0;
    let mut j = 0;
    for k in 0..RECALL_POINTS {
        let r = k as f64 / (RECALL_POINTS - 1) as f64;
        while j < envelope.len() && envelope[j].1 < r - 1e-12 {
            j += 1;
        }
        if j < envelope.len() {
            sum += envelope[j].0;
        }
    }
    sum / RECALL_POINTS as f64
}

/// Full metric suite over a dataset.
pub fn compute_report<T: Scalar>(
    frames: &[EvalFrame<T>],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument(
            "evaluation needs at least one frame".into(),
        ));
    }
    let thresholds = coco_thresholds();

    struct FrameOut {
        counts: FrameCounts,
        scored: Vec<Vec<ScoredDetection>>,
    }

    let outs: Vec<FrameOut> = frames
        .par_iter()
        .map(|f| -> Result<FrameOut> {
            let ious = iou_matrix(&f.preds, &f.gts)?;
            let scored = thresholds
                .iter()
                .map(|&t| {
                    let m = match_with(&ious, &f.preds, f.gts.len(), t);
                    (0..f.preds.len())
                        .map(|p| ScoredDetection {
                            confidence: f.preds[p].confidence.to_f64_lossy(),
                            true_positive: m.is_matched_pred(p),
                        })
                        .collect()
                })
                .collect();

            let kept: Vec<usize> = (0..f.preds.len())
                .filter(|&p| f.preds[p].confidence.to_f64_lossy() >= opts.conf_threshold)
                .collect();
            let kept_preds: Vec<PolygonSlot<T>> = kept.iter().map(|&p| f.preds[p]).collect();
            let kept_ious: Vec<Vec<f64>> = kept.iter().map(|&p| ious[p].clone()).collect();
            let m = match_with(&kept_ious, &kept_preds, f.gts.len(), opts.iou_threshold);
            let entrance_correct = m
                .pairs
                .iter()
                .filter(|&&(p, g, _)| {
                    entrance_correct(&kept_preds[p], &f.gts[g], opts.angle_tol_deg)
                })
                .count();
            Ok(FrameOut {
                counts: FrameCounts {
                    tp: m.pairs.len(),
                    fp: m.unmatched_preds.len(),
                    fn_: m.unmatched_gts.len(),
                    entrance_correct,
                },
                scored,
            })
        })
        .collect::<Result<_>>()?;

    let mut totals = FrameCounts::default();
    for o in &outs {
        totals.tp += o.counts.tp;
        totals.fp += o.counts.fp;
        totals.fn_ += o.counts.fn_;
        totals.entrance_correct += o.counts.entrance_correct;
    }
    let num_gt: usize = frames.iter().map(|f| f.gts.len()).sum();
    let precision_defined = totals.tp + totals.fp > 0;
    let recall_defined = num_gt > 0;
    let precision = if precision_defined {
        totals.tp as f64 / (totals.tp + totals.fp) as f64
    } else {
        0.0
    };
    let recall = if recall_defined {
        totals.tp as f64 / num_gt as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };

    let ap_per_threshold: Vec<(f64, f64)> = thresholds
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let det: Vec<ScoredDetection> = outs
                .iter()
                .flat_map(|o| o.scored[k].iter().copied())
                .collect();
            (t, average_precision(&det, num_gt))
        })
        .collect();
    let map_50 = ap_per_threshold[0].1;
    let map_50_95 =
        ap_per_threshold.iter().map(|p| p.1).sum::<f64>() / ap_per_threshold.len() as f64;
    let entrance_accuracy = if totals.tp > 0 {
        totals.entrance_correct as f64 / totals.tp as f64
    } else {
        0.0
    };
    if !recall_defined {
        log::warn!("no ground-truth slots: recall and AP are undefined and reported as 0");
    }
    if !precision_defined {
        log::warn!(
            "no predictions above confidence {}: precision is undefined and reported as 0",
            opts.conf_threshold
        );
    }
    Ok(EvalReport {
        precision,
        recall,
        f1,
        precision_defined,
        recall_defined,
        ap_per_threshold,
        map_50,
        map_50_95,
        entrance_accuracy,
        totals,
        per_frame: outs.into_iter().map(|o| o.counts).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SlotType;

    fn rect(x0: f64, y0: f64, w: f64, h: f64) -> PolygonSlot<f64> {
        PolygonSlot::from_xy(
            [[x0, y0], [x0 + w, y0], [x0, y0 + h], [x0 + w, y0 + h]],
            SlotType::Perpendicular,
        )
        .unwrap()
    }

    #[test]
    fn identical_sets_match_fully() {
        let gts = vec![rect(0.0, 0.0, 2.0, 5.0), rect(3.0, 0.0, 2.0, 5.0)];
        let m = match_frame(&gts, &gts, 0.5).unwrap();
        assert_eq!(m.pairs.len(), 2);
        assert!(m
            .pairs
            .iter()
            .all(|p| p.0 == p.1 && (p.2 - 1.0).abs() < 1e-12));
        assert!(m.unmatched_preds.is_empty() && m.unmatched_gts.is_empty());
    }

    #[test]
    fn third_overlap_is_a_miss() {
        let m = match_frame(
            &[rect(0.5, 0.0, 1.0, 1.0)],
            &[rect(0.0, 0.0, 1.0, 1.0)],
            0.5,
        )
        .unwrap();
        assert!(m.pairs.is_empty());
        assert_eq!((m.unmatched_preds.len(), m.unmatched_gts.len()), (1, 1));
    }

    #[test]
    fn one_gt_one_match() {
        let gt = rect(0.0, 0.0, 10.0, 10.0);
        let hi = rect(0.5, 0.0, 10.0, 10.0).with_confidence(0.9);
        let lo = rect(0.0, 0.5, 10.0, 10.0).with_confidence(0.8);
        let m = match_frame(&[lo, hi], &[gt], 0.5).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].0, 1);
        assert_eq!(m.unmatched_preds, vec![0]);
    }

    #[test]
    fn entrance_examples() {
        let gt = rect(0.0, 0.0, 2.5, 5.0);
        let m = match_frame(&[gt], &[gt], 0.5).unwrap();
        assert_eq!(entrance_accuracy(&m, &[gt], &[gt], 5.0), 1.0);

        let c = gt.corners;
        // entrance and ending swapped: same footprint
        let swapped = PolygonSlot::new([c[2], c[3], c[0], c[1]], SlotType::Perpendicular).unwrap();
        let m = match_frame(&[swapped], &[gt], 0.5).unwrap();
        assert!((m.pairs[0].2 - 1.0).abs() < 1e-12);
        assert_eq!(entrance_accuracy(&m, &[swapped], &[gt], 5.0), 0.0);

        let center = gt.centroid();
        let tilted = gt.map_corners(|p| center + (p - center).rotated(3f64.to_radians()));
        let m = match_frame(&[tilted], &[gt], 0.5).unwrap();
        assert_eq!(entrance_accuracy(&m, &[tilted], &[gt], 5.0), 1.0);
        assert_eq!(entrance_accuracy(&m, &[tilted], &[gt], 2.0), 0.0);
    }

    #[test]
    fn hand_countable_set() {
        // 10 gts, 10 preds at IoU 0.7, 5 disjoint FPs, equal confidences
        let mut gts = Vec::new();
        let mut preds = Vec::new();
        for i in 0..10 {
            let x = i as f64 * 20.0;
            gts.push(rect(x, 0.0, 10.0, 10.0));
            // overlap (10-d)*10, union (10+d)*10: IoU 0.709
            let d = 1.7;
            preds.push(rect(x + d, 0.0, 10.0, 10.0).with_confidence(0.6));
        }
        for i in 0..5 {
            preds.push(rect(i as f64 * 20.0, 100.0, 10.0, 10.0).with_confidence(0.6));
        }
        let r = compute_report(&[EvalFrame { preds, gts }], &EvalOptions::default()).unwrap();
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-4);
        assert_eq!(r.recall, 1.0);
        assert!((r.map_50 - 101.0 * (2.0 / 3.0) / 101.0).abs() < 1e-12);
        assert_eq!(r.ap_at(0.75), Some(0.0));
        assert_eq!(r.ap_at(0.7), Some(r.map_50));
        assert_eq!(r.ap_at(0.75), Some(0.0));
    }

    #[test]
    fn perfect_and_empty() {
        let gts = vec![rect(0.0, 0.0, 2.0, 5.0), rect(3.0, 0.0, 2.0, 5.0)];
        let perfect = compute_report(
            &[EvalFrame {
                preds: gts.clone(),
                gts: gts.clone(),
            }],
            &EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(
            (perfect.precision, perfect.recall, perfect.f1),
            (1.0, 1.0, 1.0)
        );
        assert!((perfect.map_50 - 1.0).abs() < 1e-12 && (perfect.map_50_95 - 1.0).abs() < 1e-12);
        assert_eq!(perfect.entrance_accuracy, 1.0);

        let none =
            compute_report(&[EvalFrame { preds: vec![], gts }], &EvalOptions::default()).unwrap();
        assert!(!none.precision_defined && none.recall_defined);
        assert_eq!((none.recall, none.map_50, none.map_50_95), (0.0, 0.0, 0.0));

        let no_gt = compute_report::<f64>(
            &[EvalFrame {
                preds: vec![],
                gts: vec![],
            }],
            &EvalOptions::default(),
        )
        .unwrap();
        assert!(!no_gt.recall_defined);
        assert!(compute_report::<f64>(&[], &EvalOptions::default()).is_err());
    }

    #[test]
    fn thresholds_are_exact() {
        let t = coco_thresholds();
        assert_eq!(t[0], 0.5);
        assert_eq!(t[5], 0.75);
        assert_eq!(t[9], 0.95);
    }
}
