//! IoU and GIoU kernels for axis-aligned boxes and slot polygons.
//!
//! Three families live here:
//!
//! * box kernels ([`box_iou`], [`box_giou`], [`box_giou_grad`]),
//! * the polygon-corner GIoU: the mean GIoU of four center-to-corner boxes,
//!   which is cheap, differentiable and sensitive to corner order,
//! * exact polygon IoU/GIoU via convex clipping, with a scanline
//!   rasterization fallback ([`raster_overlap`]) that also serves as an
//!   independent reference for the clipping path.

use crate::error::{Error, Result};
use crate::geometry::{Point2, PolygonSlot};
use crate::scalar::{lit, Scalar};

/// Area padding used in IoU/GIoU denominators.
pub const AREA_EPS: f64 = 1e-9;

/// Rasterization grid used by the non-convex fallback.
pub const RASTER_RESOLUTION: usize = 2048;

/// Axis-aligned box; zero-area boxes are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisBox<T> {
    pub min: Point2<T>,
    pub max: Point2<T>,
}

impl<T: Scalar> AxisBox<T> {
    pub fn new(min: Point2<T>, max: Point2<T>) -> Result<Self> {
        if !min.is_finite() || !max.is_finite() {
            return Err(Error::NonFinite("box"));
        }
        if min.x > max.x || min.y > max.y {
            return Err(Error::InvalidArgument(
                "box min corner exceeds max corner".into(),
            ));
        }
        Ok(Self { min, max })
    }

    /// Box spanned by two arbitrary points.
    pub fn spanning(a: Point2<T>, b: Point2<T>) -> Self {
        Self {
            min: Point2::new(a.x.min(b.x), a.y.min(b.y)),
            max: Point2::new(a.x.max(b.x), a.y.max(b.y)),
        }
    }

    pub fn from_coords(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        Self::new(Point2::new(lit(x1), lit(y1)), Point2::new(lit(x2), lit(y2)))
    }

    pub fn width(&self) -> T {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> T {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    /// Smallest box enclosing both.
    pub fn enclose(&self, o: &Self) -> Self {
        Self {
            min: Point2::new(self.min.x.min(o.min.x), self.min.y.min(o.min.y)),
            max: Point2::new(self.max.x.max(o.max.x), self.max.y.max(o.max.y)),
        }
    }

    pub fn intersection_area(&self, o: &Self) -> T {
        let w = self.max.x.min(o.max.x) - self.min.x.max(o.min.x);
        let h = self.max.y.min(o.max.y) - self.min.y.max(o.min.y);
        if w > T::zero() && h > T::zero() {
            w * h
        } else {
            T::zero()
        }
    }
}

/// IoU and GIoU of a box pair, plus whether both boxes had zero area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxOverlap<T> {
    pub iou: T,
    pub giou: T,
    /// Set when both boxes are zero-area; the values then come from the
    /// epsilon guard alone.
    pub degenerate: bool,
}

pub fn box_overlap<T: Scalar>(a: &AxisBox<T>, b: &AxisBox<T>) -> BoxOverlap<T> {
    let eps: T = lit(AREA_EPS);
    let (area_a, area_b) = (a.area(), b.area());
    let inter = a.intersection_area(b);
    let union = area_a + area_b - inter;
    let hull = a.enclose(b).area();
    let iou = inter / (union + eps);
    BoxOverlap {
        iou,
        giou: iou - (hull - union) / (hull + eps),
        degenerate: area_a == T::zero() && area_b == T::zero(),
    }
}

pub fn box_iou<T: Scalar>(a: &AxisBox<T>, b: &AxisBox<T>) -> T {
    box_overlap(a, b).iou
}

pub fn box_giou<T: Scalar>(a: &AxisBox<T>, b: &AxisBox<T>) -> T {
    box_overlap(a, b).giou
}

/// GIoU of `a` against a fixed `b` and its gradient with respect to
/// `[a.min.x, a.min.y, a.max.x, a.max.y]`.
///
/// min/max ties between the two boxes take the `b` branch, so the gradient
/// is one-sided there.
pub fn box_giou_grad<T: Scalar>(a: &AxisBox<T>, b: &AxisBox<T>) -> (T, [T; 4]) {
    let eps: T = lit(AREA_EPS);
    let (zero, one) = (T::zero(), T::one());
    let step = |cond: bool| if cond { one } else { zero };

    let (aw, ah) = (a.width(), a.height());
    let area_a = aw * ah;
    let area_b = b.area();
    let d_area_a = [-ah, -aw, ah, aw];

    // intersection
    let iw = a.max.x.min(b.max.x) - a.min.x.max(b.min.x);
    let ih = a.max.y.min(b.max.y) - a.min.y.max(b.min.y);
    let (inter, d_inter) = if iw > zero && ih > zero {
        (
            iw * ih,
            [
                -step(a.min.x > b.min.x) * ih,
                -step(a.min.y > b.min.y) * iw,
                step(a.max.x < b.max.x) * ih,
                step(a.max.y < b.max.y) * iw,
            ],
        )
    } else {
        (zero, [zero; 4])
    };

    let union = area_a + area_b - inter;
    let d_union: [T; 4] = std::array::from_fn(|k| d_area_a[k] - d_inter[k]);

    // enclosing box
    let cw = a.max.x.max(b.max.x) - a.min.x.min(b.min.x);
    let ch = a.max.y.max(b.max.y) - a.min.y.min(b.min.y);
    let hull = cw * ch;
    let d_hull = [
        -step(a.min.x < b.min.x) * ch,
        -step(a.min.y < b.min.y) * cw,
        step(a.max.x > b.max.x) * ch,
        step(a.max.y > b.max.y) * cw,
    ];

    let ue = union + eps;
    let he = hull + eps;
    let giou = inter / ue - (hull - union) / he;
    let grad = std::array::from_fn(|k| {
        d_inter[k] / ue
            - inter * d_union[k] / (ue * ue)
            - ((d_hull[k] - d_union[k]) * he - (hull - union) * d_hull[k]) / (he * he)
    });
    (giou, grad)
}

/// Box with `center` and `corner` as opposite vertices.
pub fn corner_box<T: Scalar>(center: Point2<T>, corner: Point2<T>) -> AxisBox<T> {
    AxisBox::spanning(center, corner)
}

/// Mean GIoU of the four center-to-corner boxes, each slot using its own
/// vertex centroid. Equals 1 exactly iff the corners coincide.
pub fn polygon_corner_giou<T: Scalar>(pred: &PolygonSlot<T>, gt: &PolygonSlot<T>) -> Result<T> {
    pred.validate()?;
    polygon_corner_giou_with_center(pred, pred.centroid(), gt)
}

/// Like [`polygon_corner_giou`] but with an externally supplied prediction
/// center (for example the center a detection head regressed).
pub fn polygon_corner_giou_with_center<T: Scalar>(
    pred: &PolygonSlot<T>,
    pred_center: Point2<T>,
    gt: &PolygonSlot<T>,
) -> Result<T> {
    gt.validate()?;
    if !pred.is_finite() || !pred_center.is_finite() {
        return Err(Error::NonFinite("prediction"));
    }
    let gt_center = gt.centroid();
    let mut acc = T::zero();
    for i in 0..4 {
        let a = corner_box(pred_center, pred.corners[i]);
        let b = corner_box(gt_center, gt.corners[i]);
        acc = acc + corner_pair_giou(&a, &b);
    }
    Ok(acc * lit(0.25))
}

/// Identical boxes score exactly 1, including the zero-area case where the
/// epsilon-guarded formula would give 0.
pub(crate) fn corner_pair_giou<T: Scalar>(a: &AxisBox<T>, b: &AxisBox<T>) -> T {
    if a == b {
        T::one()
    } else {
        box_giou(a, b)
    }
}

/// Enclosure used by [`polygon_giou_exact`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Enclosure {
    /// Convex hull of all eight vertices.
    #[default]
    ConvexHull,
    /// Axis-aligned bounding box of all eight vertices.
    AxisAligned,
}

/// Intersection and union areas of two slot polygons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolygonOverlap<T> {
    pub intersection: T,
    pub union: T,
    /// True when the rasterization fallback produced the areas.
    pub rasterized: bool,
}

impl<T: Scalar> PolygonOverlap<T> {
    pub fn iou(&self) -> T {
        if self.union > T::zero() {
            (self.intersection / self.union)
                .max(T::zero())
                .min(T::one())
        } else {
            T::zero()
        }
    }
}

pub fn polygon_overlap<T: Scalar>(
    a: &PolygonSlot<T>,
    b: &PolygonSlot<T>,
) -> Result<PolygonOverlap<T>> {
    a.validate()?;
    b.validate()?;
    let ra = ccw_ring(&a.outline());
    let rb = ccw_ring(&b.outline());
    if is_convex(&ra) && is_convex(&rb) {
        let inter = polygon_area(&clip_convex(&ra, &rb));
        Ok(PolygonOverlap {
            intersection: inter,
            union: a.area() + b.area() - inter,
            rasterized: false,
        })
    } else {
        let r = raster_overlap(&ra, &rb, RASTER_RESOLUTION);
        Ok(PolygonOverlap {
            intersection: r.intersection,
            union: r.union,
            rasterized: true,
        })
    }
}

/// Exact polygon IoU for convex slots; non-convex slots are rasterized.
pub fn polygon_iou_exact<T: Scalar>(a: &PolygonSlot<T>, b: &PolygonSlot<T>) -> Result<T> {
    Ok(polygon_overlap(a, b)?.iou())
}

/// Polygon GIoU with the convex hull of both polygons as enclosure.
pub fn polygon_giou_exact<T: Scalar>(a: &PolygonSlot<T>, b: &PolygonSlot<T>) -> Result<T> {
    polygon_giou_with(a, b, Enclosure::ConvexHull)
}

pub fn polygon_giou_with<T: Scalar>(
    a: &PolygonSlot<T>,
    b: &PolygonSlot<T>,
    enclosure: Enclosure,
) -> Result<T> {
    let ov = polygon_overlap(a, b)?;
    let pts: Vec<Point2<T>> = a.corners.iter().chain(b.corners.iter()).copied().collect();
    let hull_area = match enclosure {
        Enclosure::ConvexHull => polygon_area(&convex_hull(&pts)),
        Enclosure::AxisAligned => {
            let bb = bounding_box(&pts);
            bb.area()
        }
    };
    // the hull can never be smaller than the union; clamp rounding noise
    let hull_area = hull_area.max(ov.union);
    Ok(ov.iou() - (hull_area - ov.union) / (hull_area + lit(AREA_EPS)))
}

pub(crate) fn bounding_box<T: Scalar>(pts: &[Point2<T>]) -> AxisBox<T> {
    let mut bb = AxisBox::spanning(pts[0], pts[0]);
    for &p in &pts[1..] {
        bb = bb.enclose(&AxisBox::spanning(p, p));
    }
    bb
}

/// Shoelace area (absolute) of a closed ring.
pub fn polygon_area<T: Scalar>(ring: &[Point2<T>]) -> T {
    signed_ring_area(ring).abs()
}

fn signed_ring_area<T: Scalar>(ring: &[Point2<T>]) -> T {
    if ring.len() < 3 {
        return T::zero();
    }
    let mut acc = T::zero();
    for i in 0..ring.len() {
        acc = acc + ring[i].cross(ring[(i + 1) % ring.len()]);
    }
    acc * lit(0.5)
}

fn ccw_ring<T: Scalar>(ring: &[Point2<T>; 4]) -> Vec<Point2<T>> {
    let mut v = ring.to_vec();
    if signed_ring_area(&v) < T::zero() {
        v.reverse();
    }
    v
}

/// Every turn has the same sign (collinear vertices allowed).
pub fn is_convex<T: Scalar>(ring: &[Point2<T>]) -> bool {
    let n = ring.len();
    let (mut pos, mut neg) = (false, false);
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        let c = ring[(i + 2) % n];
        let z = (b - a).cross(c - b);
        if z > T::zero() {
            pos = true;
        } else if z < T::zero() {
            neg = true;
        }
    }
    !(pos && neg)
}

/// Sutherland–Hodgman: clips `subject` by the convex counterclockwise `clip`.
pub fn clip_convex<T: Scalar>(subject: &[Point2<T>], clip: &[Point2<T>]) -> Vec<Point2<T>> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let e0 = clip[i];
        let e1 = clip[(i + 1) % clip.len()];
        let edge = e1 - e0;
        let side = |p: Point2<T>| edge.cross(p - e0);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= T::zero() {
                if sp < T::zero() {
                    out.push(prev + (cur - prev) * (sp / (sp - sc)));
                }
                out.push(cur);
            } else if sp >= T::zero() {
                out.push(prev + (cur - prev) * (sp / (sp - sc)));
            }
        }
    }
    out
}

/// Andrew's monotone chain; returns the hull counterclockwise.
pub fn convex_hull<T: Scalar>(pts: &[Point2<T>]) -> Vec<Point2<T>> {
    let mut p = pts.to_vec();
    p.sort_by(|a, b| {
        a.x.partial_cmp(&b.x)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.y.partial_cmp(&b.y).unwrap_or(std::cmp::Ordering::Equal))
    });
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut hull: Vec<Point2<T>> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2<T>>> = if pass == 0 {
            Box::new(p.iter())
        } else {
            Box::new(p.iter().rev())
        };
        for &q in iter {
            while hull.len() >= start + 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                if (b - a).cross(q - b) <= T::zero() {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

/// Sampled intersection/union areas on a `resolution`² grid of cell centers
/// spanning the joint bounding box.
///
/// Rows are scanned analytically (edge crossings, even-odd rule), so a
/// 2048² grid costs a few thousand edge evaluations per polygon instead of
/// millions of point tests. Works for any simple polygon.
pub fn raster_overlap<T: Scalar>(
    a: &[Point2<T>],
    b: &[Point2<T>],
    resolution: usize,
) -> PolygonOverlap<T> {
    let pts: Vec<Point2<f64>> = a.iter().chain(b.iter()).map(|p| p.cast()).collect();
    let pa: Vec<Point2<f64>> = a.iter().map(|p| p.cast()).collect();
    let pb: Vec<Point2<f64>> = b.iter().map(|p| p.cast()).collect();
    let bb = bounding_box(&pts);
    let n = resolution.max(1);
    let dx = bb.width() / n as f64;
    let dy = bb.height() / n as f64;

    let (mut inter, mut count_a, mut count_b) = (0u64, 0u64, 0u64);
    let mut spans_a = Vec::new();
    let mut spans_b = Vec::new();
    for row in 0..n {
        let y = bb.min.y + (row as f64 + 0.5) * dy;
        row_spans(&pa, y, bb.min.x, dx, n, &mut spans_a);
        row_spans(&pb, y, bb.min.x, dx, n, &mut spans_b);
        count_a += spans_a.iter().map(|&(s, e)| (e - s) as u64).sum::<u64>();
        count_b += spans_b.iter().map(|&(s, e)| (e - s) as u64).sum::<u64>();
        for &(s0, e0) in &spans_a {
            for &(s1, e1) in &spans_b {
                let (s, e) = (s0.max(s1), e0.min(e1));
                if e > s {
                    inter += (e - s) as u64;
                }
            }
        }
    }
    let cell = dx * dy;
    PolygonOverlap {
        intersection: lit(inter as f64 * cell),
        union: lit((count_a + count_b - inter) as f64 * cell),
        rasterized: true,
    }
}

/// Column ranges `[start, end)` whose cell centers lie inside `ring` on row `y`.
fn row_spans(
    ring: &[Point2<f64>],
    y: f64,
    x0: f64,
    dx: f64,
    n: usize,
    out: &mut Vec<(usize, usize)>,
) {
    out.clear();
    let mut xs: Vec<f64> = Vec::with_capacity(ring.len());
    for i in 0..ring.len() {
        let p = ring[i];
        let q = ring[(i + 1) % ring.len()];
        if (p.y > y) != (q.y > y) {
            xs.push(p.x + (y - p.y) * (q.x - p.x) / (q.y - p.y));
        }
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    // a cell center x0 + (j + 0.5) dx is inside [lo, hi) when
    // ceil((lo - x0)/dx - 0.5) <= j < ceil((hi - x0)/dx - 0.5)
    let col = |x: f64| ((x - x0) / dx - 0.5).ceil().clamp(0.0, n as f64) as usize;
    for pair in xs.chunks_exact(2) {
        let (s, e) = (col(pair[0]), col(pair[1]));
        if e > s {
            out.push((s, e));
        }
    }
}
