//! Ordered four-corner parking slot polygons.
//!
//! A slot stores its corners in *semantic* order:
//! `[entrance-left, entrance-right, ending-left, ending-right]`.
//! The closed outline is walked in *traversal* order
//! `entrance-left -> entrance-right -> ending-right -> ending-left`, so the
//! entrance and ending lines are opposite edges.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Areas below this (squared working units) are rejected as degenerate.
pub const MIN_SLOT_AREA: f64 = 1e-9;

/// Indices into [`PolygonSlot::corners`].
pub const ENTRANCE_LEFT: usize = 0;
pub const ENTRANCE_RIGHT: usize = 1;
pub const ENDING_LEFT: usize = 2;
pub const ENDING_RIGHT: usize = 3;

/// Storage indices visited when walking the outline.
pub const TRAVERSAL: [usize; 4] = [ENTRANCE_LEFT, ENTRANCE_RIGHT, ENDING_RIGHT, ENDING_LEFT];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn origin() -> Self {
        Self::new(T::zero(), T::zero())
    }

    #[inline]
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 2D cross product.
    #[inline]
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn distance(self, o: Self) -> T {
        (self - o).norm()
    }

    /// Rotates counterclockwise about the origin by `angle` radians.
    pub fn rotated(self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn cast<U: Scalar>(self) -> Point2<U> {
        Point2::new(U::lit(self.x.to_f64_lossy()), U::lit(self.y.to_f64_lossy()))
    }
}

impl<T: Scalar> Add for Point2<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Scalar> Sub for Point2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Scalar> Mul<T> for Point2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

impl<T: Scalar> Neg for Point2<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotType {
    #[default]
    Perpendicular,
    Parallel,
    Diagonal,
}

impl SlotType {
    pub const ALL: [SlotType; 3] = [
        SlotType::Perpendicular,
        SlotType::Parallel,
        SlotType::Diagonal,
    ];

    pub fn index(self) -> usize {
        match self {
            SlotType::Perpendicular => 0,
            SlotType::Parallel => 1,
            SlotType::Diagonal => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SlotType::Perpendicular => "perpendicular",
            SlotType::Parallel => "parallel",
            SlotType::Diagonal => "diagonal",
        }
    }
}

impl fmt::Display for SlotType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SlotType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "perpendicular" => Ok(SlotType::Perpendicular),
            "parallel" => Ok(SlotType::Parallel),
            "diagonal" | "slanted" | "fishbone" => Ok(SlotType::Diagonal),
            other => Err(format!("unknown slot type `{other}`")),
        }
    }
}

/// A parking slot as four ordered corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolygonSlot<T> {
    /// `[entrance-left, entrance-right, ending-left, ending-right]`.
    pub corners: [Point2<T>; 4],
    pub slot_type: SlotType,
    /// Detection confidence; 1 for ground truth.
    pub confidence: T,
}

impl<T: Scalar> PolygonSlot<T> {
    /// Builds a ground-truth slot (confidence 1) and validates it.
    pub fn new(corners: [Point2<T>; 4], slot_type: SlotType) -> Result<Self> {
        let slot = Self::new_unchecked(corners, slot_type, T::one());
        slot.validate()?;
        Ok(slot)
    }

    pub fn new_unchecked(corners: [Point2<T>; 4], slot_type: SlotType, confidence: T) -> Self {
        Self {
            corners,
            slot_type,
            confidence,
        }
    }

    /// Convenience constructor from `[x, y]` pairs in storage order.
    pub fn from_xy(xy: [[f64; 2]; 4], slot_type: SlotType) -> Result<Self> {
        Self::new(xy.map(|[x, y]| Point2::new(lit(x), lit(y))), slot_type)
    }

    pub fn with_confidence(mut self, confidence: T) -> Self {
        self.confidence = confidence;
        self
    }

    pub fn entrance_left(&self) -> Point2<T> {
        self.corners[ENTRANCE_LEFT]
    }

    pub fn entrance_right(&self) -> Point2<T> {
        self.corners[ENTRANCE_RIGHT]
    }

    /// Corners in outline order.
    pub fn outline(&self) -> [Point2<T>; 4] {
        TRAVERSAL.map(|i| self.corners[i])
    }

    /// Shoelace area of the outline; positive when counterclockwise.
    pub fn signed_area(&self) -> T {
        let ring = self.outline();
        let mut acc = T::zero();
        for i in 0..4 {
            acc = acc + ring[i].cross(ring[(i + 1) % 4]);
        }
        acc * lit(0.5)
    }

    pub fn area(&self) -> T {
        self.signed_area().abs()
    }

    /// Arithmetic mean of the four corners.
    pub fn centroid(&self) -> Point2<T> {
        let c = &self.corners;
        Point2::new(
            (c[0].x + c[1].x + c[2].x + c[3].x) * lit(0.25),
            (c[0].y + c[1].y + c[2].y + c[3].y) * lit(0.25),
        )
    }

    /// Sum of unsigned fan-triangle areas about the centroid.
    fn lobe_area(&self) -> T {
        let c = self.centroid();
        let r = self.outline();
        (0..4).fold(T::zero(), |acc, i| {
            acc + (r[i] - c).cross(r[(i + 1) % 4] - c).abs()
        }) * lit(0.5)
    }

    pub fn is_finite(&self) -> bool {
        self.corners.iter().all(Point2::is_finite) && self.confidence.is_finite()
    }

    /// True iff no two non-adjacent outline edges intersect.
    pub fn is_simple(&self) -> bool {
        self.crossing_edges().is_none()
    }

    fn crossing_edges(&self) -> Option<(usize, usize)> {
        let r = self.outline();
        for (a, b) in [(0usize, 2usize), (1, 3)] {
            if segments_intersect(r[a], r[(a + 1) % 4], r[b], r[(b + 1) % 4]) {
                return Some((a, b));
            }
        }
        None
    }

    /// Checks finiteness, simplicity and positive area.
    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::NonFinite("slot"));
        }
        let conf = self.confidence.to_f64_lossy();
        if !(0.0..=1.0).contains(&conf) {
            return Err(Error::InvalidConfidence(conf));
        }
        // a collapsed ring is degenerate; a bowtie has zero signed area but
        // nonzero lobes and is reported as crossing
        let lobes = self.lobe_area().to_f64_lossy();
        if lobes < MIN_SLOT_AREA {
            return Err(Error::DegenerateSlot {
                area: lobes,
                min: MIN_SLOT_AREA,
            });
        }
        if let Some((a, b)) = self.crossing_edges() {
            return Err(Error::SelfIntersecting(a, b));
        }
        let area = self.area().to_f64_lossy();
        if area < MIN_SLOT_AREA {
            return Err(Error::DegenerateSlot {
                area,
                min: MIN_SLOT_AREA,
            });
        }
        Ok(())
    }

    pub fn to_relative(&self) -> Result<RelativeSlot<T>> {
        self.validate()?;
        let center = self.centroid();
        Ok(RelativeSlot {
            center,
            offsets: self.corners.map(|p| p - center),
            slot_type: self.slot_type,
            confidence: self.confidence,
        })
    }

    /// Signed angle in degrees, in `(-180, 180]`, of the entrance line
    /// (entrance-left to entrance-right) measured counterclockwise from +x.
    pub fn entrance_angle(&self) -> Result<T> {
        let d = self.entrance_right() - self.entrance_left();
        if !d.is_finite() {
            return Err(Error::NonFinite("entrance line"));
        }
        if d.x == T::zero() && d.y == T::zero() {
            return Err(Error::CoincidentEntrance);
        }
        let deg = d.y.atan2(d.x).to_degrees();
        Ok(if deg <= lit(-180.0) {
            deg + lit(360.0)
        } else {
            deg
        })
    }

    /// Applies `f` to every corner, keeping storage order.
    pub fn map_corners(&self, f: impl Fn(Point2<T>) -> Point2<T>) -> Self {
        Self {
            corners: self.corners.map(f),
            ..*self
        }
    }

    pub fn translated(&self, d: Point2<T>) -> Self {
        self.map_corners(|p| p + d)
    }

    pub fn cast<U: Scalar>(&self) -> PolygonSlot<U> {
        PolygonSlot {
            corners: self.corners.map(Point2::cast),
            slot_type: self.slot_type,
            confidence: U::lit(self.confidence.to_f64_lossy()),
        }
    }
}

/// Center plus per-corner offsets, the form a detection head regresses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeSlot<T> {
    pub center: Point2<T>,
    /// Same order as [`PolygonSlot::corners`].
    pub offsets: [Point2<T>; 4],
    pub slot_type: SlotType,
    pub confidence: T,
}

impl<T: Scalar> RelativeSlot<T> {
    pub fn from_relative(&self) -> Result<PolygonSlot<T>> {
        if !self.center.is_finite() || !self.offsets.iter().all(Point2::is_finite) {
            return Err(Error::NonFinite("relative slot"));
        }
        let slot = PolygonSlot::new_unchecked(
            self.offsets.map(|o| self.center + o),
            self.slot_type,
            self.confidence,
        );
        slot.validate()?;
        Ok(slot)
    }
}

fn orient<T: Scalar>(a: Point2<T>, b: Point2<T>, c: Point2<T>) -> T {
    (b - a).cross(c - a)
}

fn on_segment<T: Scalar>(a: Point2<T>, b: Point2<T>, p: Point2<T>) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test (touching counts).
pub fn segments_intersect<T: Scalar>(
    p1: Point2<T>,
    p2: Point2<T>,
    q1: Point2<T>,
    q2: Point2<T>,
) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    let zero = T::zero();
    if ((d1 > zero && d2 < zero) || (d1 < zero && d2 > zero))
        && ((d3 > zero && d4 < zero) || (d3 < zero && d4 > zero))
    {
        return true;
    }
    (d1 == zero && on_segment(q1, q2, p1))
        || (d2 == zero && on_segment(q1, q2, p2))
        || (d3 == zero && on_segment(p1, p2, q1))
        || (d4 == zero && on_segment(p1, p2, q2))
}
