#![allow(dead_code)]

use parkslot::eval::{match_frame, EvalFrame};
use parkslot::geometry::TRAVERSAL;
use parkslot::iou::corner_box;
use parkslot::ipm::{FisheyeCamera, Projection, Rig};
use parkslot::loss::{polygon_loss, LossWeights};
use parkslot::{Point2, PolygonSlot, SlotType};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random convex quadrilateral: one vertex per quarter turn around a center,
/// written back in corner storage order.
pub fn random_convex_slot<R: Rng>(
    rng: &mut R,
    center: Point2<f64>,
    radius: f64,
) -> PolygonSlot<f64> {
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut corners = [Point2::origin(); 4];
    for (k, &idx) in TRAVERSAL.iter().enumerate() {
        let a = phase + (k as f64 + rng.gen_range(0.1..0.9)) * std::f64::consts::FRAC_PI_2;
        let r = radius * rng.gen_range(0.6..1.4);
        corners[idx] = Point2::new(center.x + r * a.cos(), center.y + r * a.sin());
    }
    PolygonSlot::new(corners, SlotType::Perpendicular).expect("convex construction is valid")
}

pub fn unit_square() -> PolygonSlot<f64> {
    PolygonSlot::from_xy(
        [[-1., 1.], [1., 1.], [-1., -1.], [1., -1.]],
        SlotType::Perpendicular,
    )
    .unwrap()
}

pub fn axis_square(x0: f64, y0: f64, w: f64, h: f64) -> PolygonSlot<f64> {
    PolygonSlot::from_xy(
        [[x0, y0 + h], [x0 + w, y0 + h], [x0, y0], [x0 + w, y0]],
        SlotType::Perpendicular,
    )
    .unwrap()
}

/// Moves every corner independently by up to `amount` on each axis.
pub fn jitter<R: Rng>(rng: &mut R, slot: &PolygonSlot<f64>, amount: f64) -> PolygonSlot<f64> {
    let mut out = *slot;
    for c in out.corners.iter_mut() {
        c.x += rng.gen_range(-amount..amount);
        c.y += rng.gen_range(-amount..amount);
    }
    out
}

pub fn shift<R: Rng>(rng: &mut R, slot: &PolygonSlot<f64>, amount: f64) -> PolygonSlot<f64> {
    slot.translated(Point2::new(
        rng.gen_range(-amount..amount),
        rng.gen_range(-amount..amount),
    ))
}

/// Annotation precision used for random frames: 1/256 px, a dyadic grid on
/// which raster mirroring is exact in binary floating point.
pub const LABEL_GRID: f64 = 1.0 / 256.0;

/// Frame on the default raster with up to 8 random slots of random types,
/// corners on the [`LABEL_GRID`].
pub fn random_frame<R: Rng>(rng: &mut R, index: usize) -> parkslot::dataset::LabeledFrame<f64> {
    use parkslot::dataset::{LabeledFrame, SceneTag};
    let n = rng.gen_range(0..=8);
    let slots = (0..n)
        .map(|_| {
            let c = Point2::new(rng.gen_range(40.0..600.0), rng.gen_range(40.0..600.0));
            let radius = rng.gen_range(10.0..60.0);
            let mut s = random_convex_slot(rng, c, radius);
            s = s.map_corners(|p| {
                Point2::new(
                    (p.x / LABEL_GRID).round() * LABEL_GRID,
                    (p.y / LABEL_GRID).round() * LABEL_GRID,
                )
            });
            s.slot_type = SlotType::ALL[rng.gen_range(0..3)];
            if rng.gen_bool(0.3) {
                s.confidence = rng.gen_range(0.0..1.0);
            }
            s
        })
        .collect();
    let scene = [
        None,
        Some(SceneTag::Normal),
        Some(SceneTag::Indoor),
        Some(SceneTag::Paving),
    ][rng.gen_range(0..4)];
    LabeledFrame {
        scene,
        ..LabeledFrame::new(format!("topview/{index:06}.png"), slots)
    }
}

// Loss gradient checking.

pub const KINK_MARGIN: f64 = 1e-3;

/// Smallest distance from any min/max tie or zero crossing that makes the
/// loss non-smooth. Finite differences are only meaningful away from those.
pub fn kink_distance(pred: &PolygonSlot<f64>, gt: &PolygonSlot<f64>) -> f64 {
    let c = pred.centroid();
    let gc = gt.centroid();
    let mut m = f64::INFINITY;
    for i in 0..4 {
        let p = pred.corners[i];
        m = m.min((p.x - c.x).abs()).min((p.y - c.y).abs());
        m = m.min(p.distance(gt.corners[i]));
        let a = corner_box(c, p);
        let b = corner_box(gc, gt.corners[i]);
        for (u, v) in [
            (a.min.x, b.min.x),
            (a.min.y, b.min.y),
            (a.max.x, b.max.x),
            (a.max.y, b.max.y),
        ] {
            m = m.min((u - v).abs());
        }
        let iw = a.max.x.min(b.max.x) - a.min.x.max(b.min.x);
        let ih = a.max.y.min(b.max.y) - a.min.y.max(b.min.y);
        m = m.min(iw.abs()).min(ih.abs());
    }
    m
}

pub fn finite_difference(
    pred: &PolygonSlot<f64>,
    gt: &PolygonSlot<f64>,
    w: &LossWeights<f64>,
    h: f64,
) -> [f64; 8] {
    let mut out = [0.0; 8];
    for k in 0..8 {
        let bump = |s: f64| {
            let mut p = *pred;
            let c = &mut p.corners[k / 2];
            if k % 2 == 0 {
                c.x += s
            } else {
                c.y += s
            }
            polygon_loss(&p, gt, w).unwrap().total
        };
        out[k] = (bump(h) - bump(-h)) / (2.0 * h);
    }
    out
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

// Topview reconstruction.

pub const SQUARE_M: f64 = 4.0;

pub fn checkerboard(g: Point2<f64>) -> [f64; 3] {
    let parity = ((g.x / SQUARE_M).floor() as i64 + (g.y / SQUARE_M).floor() as i64).rem_euclid(2);
    [if parity == 0 { 64.0 } else { 192.0 }; 3]
}

/// Distance from `g` to the stitching boundary between camera `k` and its
/// closest competitor that also sees `g`.
pub fn seam_distance(rig: &Rig<f64>, k: usize, g: Point2<f64>) -> f64 {
    let anchors: Vec<_> = rig
        .cameras
        .iter()
        .map(FisheyeCamera::ground_anchor)
        .collect();
    let d1 = g.distance(anchors[k]);
    rig.cameras
        .iter()
        .enumerate()
        .filter(|&(j, c)| {
            j != k
                && c.project_ground_point(g)
                    .ok()
                    .and_then(Projection::pixel)
                    .is_some_and(|p| c.in_image(p))
        })
        .map(|(j, _)| {
            let dj = g.distance(anchors[j]);
            (dj * dj - d1 * d1) / (2.0 * anchors[k].distance(anchors[j]))
        })
        .fold(f64::INFINITY, f64::min)
}

// Detection sets with a brute-force AP oracle.

/// Confidence ranges for (localized, duplicate, clutter) predictions.
pub type Profile = [(f64, f64); 3];

/// A detector that mostly ranks its hits above its mistakes.
pub const DETECTOR: Profile = [(0.3, 1.0), (0.0, 0.6), (0.0, 0.5)];
/// Confidence carries no information beyond a slight edge for hits.
pub const UNIFORM: Profile = [(0.05, 1.0), (0.0, 0.8), (0.0, 1.0)];

pub fn random_dataset(rng: &mut ChaCha8Rng, frames: usize) -> Vec<EvalFrame<f64>> {
    random_dataset_with(rng, frames, UNIFORM)
}

/// Frames of well-separated gts; every gt gets one localized prediction
/// (IoU > 0.5 with varying quality), plus duplicates and clutter.
pub fn random_dataset_with(
    rng: &mut ChaCha8Rng,
    frames: usize,
    profile: Profile,
) -> Vec<EvalFrame<f64>> {
    (0..frames)
        .map(|_| {
            let mut gts = Vec::new();
            let mut preds = Vec::new();
            for k in 0..rng.gen_range(3..8) {
                let c = Point2::new(60.0 + 120.0 * (k % 4) as f64, 60.0 + 120.0 * (k / 4) as f64);
                let gt = random_convex_slot(rng, c, 30.0);
                gts.push(gt);
                let mut p = jitter(rng, &gt, 4.0);
                p.confidence = rng.gen_range(profile[0].0..profile[0].1);
                if p.validate().is_ok() {
                    preds.push(p);
                }
                if rng.gen_bool(0.3) {
                    let mut dup = jitter(rng, &gt, 6.0);
                    dup.confidence = rng.gen_range(profile[1].0..profile[1].1);
                    if dup.validate().is_ok() {
                        preds.push(dup);
                    }
                }
            }
            for _ in 0..rng.gen_range(0..4) {
                let c = Point2::new(rng.gen_range(0.0..500.0), rng.gen_range(300.0..500.0));
                let mut fp = random_convex_slot(rng, c, 20.0);
                fp.confidence = rng.gen_range(profile[2].0..profile[2].1);
                preds.push(fp);
            }
            preds.shuffle(rng);
            EvalFrame { preds, gts }
        })
        .collect()
}

pub struct ExactAp {
    pub area: f64,
    /// Envelope at recall 0 and at recall 1.
    pub ends: (f64, f64),
}

/// Exact area under the interpolated PR envelope, from a brute-force sweep
/// that re-matches the detections kept at every confidence threshold.
pub fn brute_force_ap(frames: &[EvalFrame<f64>], iou: f64) -> ExactAp {
    let num_gt: usize = frames.iter().map(|f| f.gts.len()).sum();
    let mut taus: Vec<f64> = frames
        .iter()
        .flat_map(|f| f.preds.iter().map(|p| p.confidence))
        .collect();
    taus.sort_by(|a, b| b.partial_cmp(a).unwrap());
    taus.dedup();
    let mut points = Vec::new();
    for tau in taus {
        let (mut tp, mut n) = (0, 0);
        for f in frames {
            let kept: Vec<PolygonSlot<f64>> = f
                .preds
                .iter()
                .copied()
                .filter(|p| p.confidence >= tau)
                .collect();
            tp += match_frame(&kept, &f.gts, iou).unwrap().pairs.len();
            n += kept.len();
        }
        points.push((tp as f64 / n as f64, tp as f64 / num_gt as f64));
    }
    let mut recalls: Vec<f64> = points.iter().map(|p| p.1).collect();
    recalls.sort_by(|a, b| a.partial_cmp(b).unwrap());
    recalls.dedup();
    let env = |r: f64| {
        points
            .iter()
            .filter(|p| p.1 >= r)
            .map(|p| p.0)
            .fold(0.0, f64::max)
    };
    let mut area = 0.0;
    let mut prev = 0.0;
    for &r in &recalls {
        area += (r - prev) * env(r);
        prev = r;
    }
    ExactAp {
        area,
        ends: (env(0.0), env(1.0)),
    }
}

// NMS candidates.

/// Clustered candidates so that suppression actually happens.
pub fn candidate_set(rng: &mut ChaCha8Rng) -> Vec<PolygonSlot<f64>> {
    let clusters = rng.gen_range(1..5);
    let mut out = Vec::new();
    for _ in 0..clusters {
        let c = Point2::new(rng.gen_range(0.0..200.0), rng.gen_range(0.0..200.0));
        let radius = rng.gen_range(10.0..30.0);
        let base = random_convex_slot(rng, c, radius);
        for _ in 0..rng.gen_range(1..6) {
            let mut s = jitter(rng, &base, 6.0);
            if s.validate().is_err() {
                continue;
            }
            // coarse confidences produce ties
            s.confidence = (rng.gen_range(0.0..1.0f64) * 10.0).round() / 10.0;
            out.push(s);
        }
    }
    out
}
