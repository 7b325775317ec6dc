//! Polygon regression loss: `w_giou * (1 - cornerGIoU) + w_dist * cornerDist`.
//!
//! The gradient is analytic with respect to the eight predicted corner
//! coordinates, laid out `[x0, y0, x1, y1, x2, y2, x3, y3]` in corner storage
//! order. Kinks (min/max ties, zero corner distance) take fixed one-sided
//! branches so results are deterministic.

use crate::error::{Error, Result};
use crate::geometry::{Point2, PolygonSlot};
use crate::iou::{box_giou_grad, corner_box};
use crate::scalar::{lit, Scalar};

/// Probability clamp used by [`bce_classification_loss`].
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights<T> {
    pub w_giou: T,
    pub w_dist: T,
}

impl<T: Scalar> Default for LossWeights<T> {
    fn default() -> Self {
        Self {
            w_giou: T::one(),
            w_dist: lit(0.75),
        }
    }
}

impl<T: Scalar> LossWeights<T> {
    pub fn new(w_giou: T, w_dist: T) -> Result<Self> {
        let w = Self { w_giou, w_dist };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("w_giou", self.w_giou), ("w_dist", self.w_dist)] {
            if !v.is_finite() || v < T::zero() {
                return Err(Error::InvalidWeights(format!(
                    "{name} = {v} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }
}

/// Knobs that change what the loss measures, not how it is weighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOptions<T> {
    /// Corner distances are divided by this (1 keeps working units, e.g.
    /// topview pixels; pass the image size to normalize).
    pub distance_scale: T,
    /// Center used for the predicted corner boxes. `None` uses the vertex
    /// centroid of the prediction (and differentiates through it).
    pub pred_center: Option<Point2<T>>,
}

impl<T: Scalar> Default for LossOptions<T> {
    fn default() -> Self {
        Self {
            distance_scale: T::one(),
            pred_center: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown<T> {
    /// `1 - mean corner-box GIoU`, in `[0, 2)`.
    pub giou_term: T,
    /// Mean corner distance.
    pub dist_term: T,
    pub total: T,
    /// d total / d (pred corner coordinates).
    pub gradient: [T; 8],
}

/// Mean Euclidean distance between corresponding corners.
pub fn corner_distance_loss<T: Scalar>(pred: &PolygonSlot<T>, gt: &PolygonSlot<T>) -> T {
    let sum = (0..4).fold(T::zero(), |acc, i| {
        acc + pred.corners[i].distance(gt.corners[i])
    });
    sum * lit(0.25)
}

pub fn polygon_loss<T: Scalar>(
    pred: &PolygonSlot<T>,
    gt: &PolygonSlot<T>,
    w: &LossWeights<T>,
) -> Result<LossBreakdown<T>> {
    polygon_loss_with(pred, gt, w, &LossOptions::default())
}

/// Full loss with gradient. `gt` must be a valid slot; `pred` only needs to
/// be finite, since a prediction may pass through degenerate shapes while
/// being optimized.
pub fn polygon_loss_with<T: Scalar>(
    pred: &PolygonSlot<T>,
    gt: &PolygonSlot<T>,
    w: &LossWeights<T>,
    opts: &LossOptions<T>,
) -> Result<LossBreakdown<T>> {
    w.validate()?;
    gt.validate()?;
    if !pred.corners.iter().all(Point2::is_finite) {
        return Err(Error::NonFinite("prediction"));
    }
    let scale = opts.distance_scale;
    if !scale.is_finite() || scale <= T::zero() {
        return Err(Error::InvalidArgument(format!(
            "distance scale {scale} must be > 0"
        )));
    }
    let quarter: T = lit(0.25);

    let (c, through_centroid) = match opts.pred_center {
        Some(c) if c.is_finite() => (c, false),
        Some(_) => return Err(Error::NonFinite("prediction center")),
        None => (pred.centroid(), true),
    };
    let gc = gt.centroid();

    let mut giou_sum = T::zero();
    let mut d_corner = [Point2::origin(); 4];
    let mut d_center = Point2::origin();
    for i in 0..4 {
        let p = pred.corners[i];
        let a = corner_box(c, p);
        let b = corner_box(gc, gt.corners[i]);
        if a == b {
            giou_sum = giou_sum + T::one();
            continue;
        }
        let (g, da) = box_giou_grad(&a, &b);
        giou_sum = giou_sum + g;
        // route d/d(box min, box max) back to the corner or the center
        let (dmin, dmax) = (Point2::new(da[0], da[1]), Point2::new(da[2], da[3]));
        let pick = |pc: T, cc: T, dlo: T, dhi: T| -> (T, T) {
            if pc < cc {
                (dlo, dhi)
            } else if pc > cc {
                (dhi, dlo)
            } else {
                (T::zero(), dlo + dhi)
            }
        };
        let (px, cx) = pick(p.x, c.x, dmin.x, dmax.x);
        let (py, cy) = pick(p.y, c.y, dmin.y, dmax.y);
        d_corner[i] = d_corner[i] + Point2::new(px, py);
        d_center = d_center + Point2::new(cx, cy);
    }
    let mean_giou = giou_sum * quarter;
    let giou_term = T::one() - mean_giou;

    let mut dist_sum = T::zero();
    let mut d_dist = [Point2::origin(); 4];
    for i in 0..4 {
        let diff = pred.corners[i] - gt.corners[i];
        let d = diff.norm();
        dist_sum = dist_sum + d / scale;
        if d > T::zero() {
            d_dist[i] = diff * (quarter / (d * scale));
        }
    }
    let dist_term = dist_sum * quarter;

    let mut gradient = [T::zero(); 8];
    for i in 0..4 {
        let mut dg = d_corner[i];
        if through_centroid {
            dg = dg + d_center * quarter;
        }
        // giou_term = 1 - sum/4
        let total = dg * (-quarter * w.w_giou) + d_dist[i] * w.w_dist;
        gradient[2 * i] = total.x;
        gradient[2 * i + 1] = total.y;
    }

    Ok(LossBreakdown {
        giou_term,
        dist_term,
        total: w.w_giou * giou_term + w.w_dist * dist_term,
        gradient,
    })
}

/// Binary cross-entropy with the probability clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_classification_loss<T: Scalar>(pred_prob: T, label: bool) -> T {
    let eps: T = lit(BCE_EPS);
    let p = pred_prob.max(eps).min(T::one() - eps);
    if label {
        -p.ln()
    } else {
        -(T::one() - p).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions<T> {
    pub steps: usize,
    pub lr: T,
    /// Heavy-ball momentum; 0 disables it.
    pub momentum: T,
    /// Halve the step size (and reset momentum) whenever a step would
    /// increase the loss, so the recorded loss never goes up.
    pub backtrack: bool,
    pub loss: LossOptions<T>,
}

impl<T: Scalar> Default for FitOptions<T> {
    fn default() -> Self {
        Self {
            steps: 500,
            lr: lit(0.05),
            momentum: T::zero(),
            backtrack: true,
            loss: LossOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitStep<T> {
    pub slot: PolygonSlot<T>,
    pub loss: LossBreakdown<T>,
    /// Step size in effect after this step.
    pub lr: T,
}

/// Gradient descent on the eight corner coordinates of `init`.
///
/// Returns the trajectory including the initial state, so its length is
/// `steps + 1`.
pub fn fit_polygon<T: Scalar>(
    gt: &PolygonSlot<T>,
    init: &PolygonSlot<T>,
    w: &LossWeights<T>,
    opts: &FitOptions<T>,
) -> Result<Vec<FitStep<T>>> {
    if !opts.lr.is_finite() || opts.lr <= T::zero() {
        return Err(Error::InvalidArgument(format!(
            "learning rate {} must be > 0",
            opts.lr
        )));
    }
    if !(opts.momentum >= T::zero() && opts.momentum < T::one()) {
        return Err(Error::InvalidArgument(format!(
            "momentum {} must be in [0, 1)",
            opts.momentum
        )));
    }
    init.validate()?;
    let mut cur = *init;
    let mut loss = polygon_loss_with(&cur, gt, w, &opts.loss)?;
    let initial = loss.total;
    let mut lr = opts.lr;
    let mut velocity = [T::zero(); 8];
    let mut traj = Vec::with_capacity(opts.steps + 1);
    traj.push(FitStep {
        slot: cur,
        loss,
        lr,
    });

    // below this the step cannot move any coordinate
    let min_lr = opts.lr * lit(1e-12);
    for step in 1..=opts.steps {
        let mut accepted = None;
        while lr >= min_lr && loss.total > T::zero() {
            let mut v = velocity;
            for k in 0..8 {
                v[k] = opts.momentum * v[k] - lr * loss.gradient[k];
            }
            let cand = cur.map_corners_indexed(|i, p| p + Point2::new(v[2 * i], v[2 * i + 1]));
            let cand_loss = polygon_loss_with(&cand, gt, w, &opts.loss)?;
            if !opts.backtrack || cand_loss.total <= loss.total {
                accepted = Some((cand, cand_loss, v));
                break;
            }
            lr = lr * lit(0.5);
            velocity = [T::zero(); 8];
        }
        if let Some((cand, cand_loss, v)) = accepted {
            cur = cand;
            loss = cand_loss;
            velocity = v;
        }
        if initial > T::zero() && loss.total > initial * lit(10.0) {
            return Err(Error::Diverged {
                step,
                loss: loss.total.to_f64_lossy(),
                initial: initial.to_f64_lossy(),
            });
        }
        traj.push(FitStep {
            slot: cur,
            loss,
            lr,
        });
    }
    Ok(traj)
}

impl<T: Scalar> PolygonSlot<T> {
    pub(crate) fn map_corners_indexed(&self, f: impl Fn(usize, Point2<T>) -> Point2<T>) -> Self {
        let mut out = *self;
        for (i, c) in out.corners.iter_mut().enumerate() {
            *c = f(i, *c);
        }
        out
    }
}

/// Largest per-corner Euclidean error.
pub fn corner_max_error<T: Scalar>(a: &PolygonSlot<T>, b: &PolygonSlot<T>) -> T {
    (0..4).fold(T::zero(), |m, i| m.max(a.corners[i].distance(b.corners[i])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SlotType;
    use approx::assert_abs_diff_eq;

    fn gt() -> PolygonSlot<f64> {
        PolygonSlot::from_xy(
            [[-1., 1.], [1., 1.], [-1., -1.], [1., -1.]],
            SlotType::Perpendicular,
        )
        .unwrap()
    }

    #[test]
    fn default_weights() {
        let w = LossWeights::<f64>::default();
        assert_eq!((w.w_giou, w.w_dist), (1.0, 0.75));
        assert!(LossWeights::new(-1.0, 0.0).is_err());
        assert!(LossWeights::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn distance_examples() {
        let g = gt();
        assert_eq!(corner_distance_loss(&g, &g), 0.0);
        assert_abs_diff_eq!(
            corner_distance_loss(&g.translated(Point2::new(0.5, 0.0)), &g),
            0.5
        );
        assert_abs_diff_eq!(
            corner_distance_loss(&g.translated(Point2::new(3.0, 4.0)), &g),
            5.0
        );
    }

    #[test]
    fn loss_at_identity_is_zero() {
        let g = gt();
        let l = polygon_loss(&g, &g, &LossWeights::default()).unwrap();
        assert_eq!(l.total, 0.0);
        assert_eq!(l.gradient, [0.0; 8]);
    }

    #[test]
    fn translated_square_loss() {
        let g = gt();
        let l = polygon_loss(
            &g.translated(Point2::new(0.5, 0.0)),
            &g,
            &LossWeights::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(l.giou_term, 2.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(l.dist_term, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(l.total, 1.0416667, epsilon = 1e-4);
        assert_eq!(l.total, l.giou_term + 0.75 * l.dist_term);
    }

    #[test]
    fn distance_scale_normalizes() {
        let g = gt();
        let opts = LossOptions {
            distance_scale: 640.0,
            ..Default::default()
        };
        let l = polygon_loss_with(
            &g.translated(Point2::new(3.0, 4.0)),
            &g,
            &LossWeights::default(),
            &opts,
        )
        .unwrap();
        assert_abs_diff_eq!(l.dist_term, 5.0 / 640.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_prediction_stays_finite() {
        let g = gt();
        let collapsed =
            PolygonSlot::new_unchecked([Point2::new(0.0, 0.0); 4], SlotType::Perpendicular, 1.0);
        let l = polygon_loss(&collapsed, &g, &LossWeights::default()).unwrap();
        assert!(l.total.is_finite());
        assert!(l.gradient.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn bce_examples() {
        assert!(bce_classification_loss(1.0f64, true) < 1e-6);
        assert_abs_diff_eq!(
            bce_classification_loss(0.5f64, true),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            bce_classification_loss(0.5f64, false),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            bce_classification_loss(0.9f64, false),
            std::f64::consts::LN_10,
            epsilon = 1e-6
        );
        assert!(bce_classification_loss(0.0f64, true).is_finite());
    }

    #[test]
    fn fit_from_identity_is_constant() {
        let g = gt();
        let traj = fit_polygon(&g, &g, &LossWeights::default(), &FitOptions::default()).unwrap();
        assert_eq!(traj.len(), 501);
        assert!(traj.iter().all(|s| s.loss.total == 0.0 && s.slot == g));
    }

    #[test]
    fn fit_rejects_bad_lr() {
        let g = gt();
        let opts = FitOptions {
            lr: 0.0,
            ..Default::default()
        };
        assert!(fit_polygon(&g, &g, &LossWeights::default(), &opts).is_err());
    }

    #[test]
    fn fit_detects_divergence() {
        let g = gt();
        let init = g.translated(Point2::new(0.5, 0.0));
        let opts = FitOptions {
            lr: 1e4,
            backtrack: false,
            ..Default::default()
        };
        let err = fit_polygon(&g, &init, &LossWeights::default(), &opts).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }
}
