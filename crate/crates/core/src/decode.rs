//! Grid head decoding and polygon NMS.
//!
//! Per anchor the head emits `11 + C` pre-activation values:
//! `tx ty dx1 dy1 dx2 dy2 dx3 dy3 dx4 dy4 obj c1..cC`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, PolygonSlot, SlotType};
use crate::iou::polygon_iou_exact;
use crate::scalar::{lit, Scalar};

pub const GEOMETRY_VALUES: usize = 10;
pub const DEFAULT_CONF_THRESHOLD: f64 = 0.25;
pub const DEFAULT_NMS_THRESHOLD: f64 = 0.45;

/// Class logit used by [`encode`] for the true type; large enough that the
/// class probability is 1 to double precision.
const ENCODE_CLASS_LOGIT: f64 = 40.0;
/// Objectness logit for empty anchors in [`encode`].
const ENCODE_EMPTY_LOGIT: f64 = -40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    /// `(S_x, S_y)` cells.
    pub grid: (usize, usize),
    pub anchors: usize,
    pub classes: usize,
    /// Raster pixels per cell.
    pub stride: f64,
}

impl Default for HeadSpec {
    /// 640 px raster at stride 32, one anchor, three slot types.
    fn default() -> Self {
        Self {
            grid: (20, 20),
            anchors: 1,
            classes: SlotType::ALL.len(),
            stride: 32.0,
        }
    }
}

impl HeadSpec {
    pub fn values_per_anchor(&self) -> usize {
        GEOMETRY_VALUES + 1 + self.classes
    }

    pub fn len(&self) -> usize {
        self.grid.0 * self.grid.1 * self.anchors * self.values_per_anchor()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.0 == 0 || self.grid.1 == 0 || self.anchors == 0 {
            return Err(Error::InvalidArgument(
                "head grid and anchor count must be non-zero".into(),
            ));
        }
        if self.classes != SlotType::ALL.len() {
            return Err(Error::InvalidArgument(format!(
                "head has {} classes; slot types need {}",
                self.classes,
                SlotType::ALL.len()
            )));
        }
        if !(self.stride > 0.0 && self.stride.is_finite()) {
            return Err(Error::InvalidArgument(
                "head stride must be positive".into(),
            ));
        }
        Ok(())
    }

    fn offset(&self, cx: usize, cy: usize, a: usize) -> usize {
        ((cy * self.grid.0 + cx) * self.anchors + a) * self.values_per_anchor()
    }
}

/// Dense head output in `(S_y, S_x, A, V)` row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPrediction<T> {
    pub head: HeadSpec,
    pub values: Vec<T>,
}

impl<T: Scalar> RawPrediction<T> {
    pub fn new(head: HeadSpec, values: Vec<T>) -> Result<Self> {
        head.validate()?;
        if values.len() != head.len() {
            return Err(Error::ShapeMismatch {
                expected: head.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prediction tensor"));
        }
        Ok(Self { head, values })
    }

    pub fn anchor(&self, cx: usize, cy: usize, a: usize) -> &[T] {
        let o = self.head.offset(cx, cy, a);
        &self.values[o..o + self.head.values_per_anchor()]
    }

    pub fn anchor_mut(&mut self, cx: usize, cy: usize, a: usize) -> &mut [T] {
        let o = self.head.offset(cx, cy, a);
        let v = self.head.values_per_anchor();
        &mut self.values[o..o + v]
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn logit<T: Scalar>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

/// Softmax maximum and its index.
fn best_class<T: Scalar>(scores: &[T]) -> (usize, T) {
    let (arg, max) = scores
        .iter()
        .enumerate()
        .fold(
            (0, T::neg_infinity()),
            |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc },
        );
    let denom = scores.iter().fold(T::zero(), |a, &s| a + (s - max).exp());
    (arg, T::one() / denom)
}

/// Decoding outcome: kept candidates, plus how many passed the confidence
/// threshold but had invalid geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded<T> {
    pub slots: Vec<PolygonSlot<T>>,
    pub invalid: usize,
}

/// Turns raw head values into slots in cell-major order. Candidates with
/// self-intersecting or degenerate corners are counted, not returned.
pub fn decode<T: Scalar>(raw: &RawPrediction<T>, conf_threshold: T) -> Result<Decoded<T>> {
    let head = raw.head;
    head.validate()?;
    if raw.values.len() != head.len() {
        return Err(Error::ShapeMismatch {
            expected: head.len(),
            got: raw.values.len(),
        });
    }
    let stride: T = lit(head.stride);
    let mut out = Decoded {
        slots: Vec::new(),
        invalid: 0,
    };
    for cy in 0..head.grid.1 {
        for cx in 0..head.grid.0 {
            for a in 0..head.anchors {
                let v = raw.anchor(cx, cy, a);
                let (class, p_class) = best_class(&v[GEOMETRY_VALUES + 1..]);
                let conf = sigmoid(v[GEOMETRY_VALUES]) * p_class;
                if conf < conf_threshold {
                    continue;
                }
                let center = Point2::new(
                    (lit::<T>(cx as f64) + sigmoid(v[0])) * stride,
                    (lit::<T>(cy as f64) + sigmoid(v[1])) * stride,
                );
                let corners =
                    std::array::from_fn(|i| center + Point2::new(v[2 + 2 * i], v[3 + 2 * i]));
                let slot = PolygonSlot::new_unchecked(corners, SlotType::ALL[class], conf);
                match slot.validate() {
                    Ok(()) => out.slots.push(slot),
                    Err(e) => {
                        log::debug!("cell ({cx}, {cy}) anchor {a}: dropped candidate: {e}");
                        out.invalid += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`decode`] for test fixtures: each slot goes to the first free
/// anchor of the cell holding its centroid.
pub fn encode<T: Scalar>(slots: &[PolygonSlot<T>], head: HeadSpec) -> Result<RawPrediction<T>> {
    head.validate()?;
    let mut values = vec![T::zero(); head.len()];
    let vpa = head.values_per_anchor();
    for chunk in values.chunks_mut(vpa) {
        chunk[GEOMETRY_VALUES] = lit(ENCODE_EMPTY_LOGIT);
    }
    let mut raw = RawPrediction { head, values };
    let stride: T = lit(head.stride);
    let mut used = vec![0usize; head.grid.0 * head.grid.1];
    let edge: T = lit(1e-9);
    for (i, s) in slots.iter().enumerate() {
        s.validate()?;
        let c = s.centroid();
        let (gx, gy) = (c.x / stride, c.y / stride);
        let (cx, cy) = (gx.floor(), gy.floor());
        let (cxu, cyu) = (cx.to_f64_lossy(), cy.to_f64_lossy());
        if cxu < 0.0 || cyu < 0.0 || cxu >= head.grid.0 as f64 || cyu >= head.grid.1 as f64 {
            return Err(Error::InvalidArgument(format!(
                "slot {i}: center {c:?} lies outside the grid"
            )));
        }
        let (cxu, cyu) = (cxu as usize, cyu as usize);
        let cell = cyu * head.grid.0 + cxu;
        if used[cell] == head.anchors {
            return Err(Error::InvalidArgument(format!(
                "slot {i}: cell ({cxu}, {cyu}) has no free anchor"
            )));
        }
        let a = used[cell];
        used[cell] += 1;
        let (fx, fy) = (
            (gx - cx).max(edge).min(T::one() - edge),
            (gy - cy).max(edge).min(T::one() - edge),
        );
        let center = Point2::new((cx + fx) * stride, (cy + fy) * stride);
        let v = raw.anchor_mut(cxu, cyu, a);
        v[0] = logit(fx);
        v[1] = logit(fy);
        for (k, p) in s.corners.iter().enumerate() {
            let d = *p - center;
            v[2 + 2 * k] = d.x;
            v[3 + 2 * k] = d.y;
        }
        let conf = s.confidence.max(lit(1e-12)).min(T::one() - lit(1e-12));
        v[GEOMETRY_VALUES] = logit(conf);
        v[GEOMETRY_VALUES + 1 + s.slot_type.index()] = lit(ENCODE_CLASS_LOGIT);
    }
    Ok(raw)
}

/// Sidecar header of an on-disk tensor.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorHeader {
    grid: [usize; 2],
    anchors: usize,
    classes: usize,
    stride: f64,
    #[serde(default = "default_dtype")]
    dtype: String,
}

fn default_dtype() -> String {
    "f32le".into()
}

/// Default sidecar location: `<tensor>.toml`.
pub fn header_path(tensor: &Path) -> PathBuf {
    let mut s = tensor.as_os_str().to_owned();
    s.push(".toml");
    PathBuf::from(s)
}

pub fn read_head_spec(path: impl AsRef<Path>) -> Result<HeadSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let h: TensorHeader = toml::from_str(&text)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
    if h.dtype != "f32le" {
        return Err(Error::InvalidArgument(format!(
            "{}: unsupported dtype `{}`",
            path.display(),
            h.dtype
        )));
    }
    let head = HeadSpec {
        grid: (h.grid[0], h.grid[1]),
        anchors: h.anchors,
        classes: h.classes,
        stride: h.stride,
    };
    head.validate()?;
    Ok(head)
}

/// Reads a little-endian f32 tensor described by `head`.
pub fn read_raw_prediction<T: Scalar>(
    tensor: impl AsRef<Path>,
    head: HeadSpec,
) -> Result<RawPrediction<T>> {
    let tensor = tensor.as_ref();
    let bytes = std::fs::read(tensor).map_err(|e| Error::io(tensor, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::InvalidArgument(format!(
            "{}: {} bytes is not a whole number of f32 values",
            tensor.display(),
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|b| lit(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
        .collect();
    RawPrediction::new(head, values)
}

/// Writes the tensor as little-endian f32 plus its sidecar header.
pub fn write_raw_prediction<T: Scalar>(
    tensor: impl AsRef<Path>,
    raw: &RawPrediction<T>,
) -> Result<()> {
    let tensor = tensor.as_ref();
    let bytes: Vec<u8> = raw
        .values
        .iter()
        .flat_map(|v| (v.to_f64_lossy() as f32).to_le_bytes())
        .collect();
    let header = TensorHeader {
        grid: [raw.head.grid.0, raw.head.grid.1],
        anchors: raw.head.anchors,
        classes: raw.head.classes,
        stride: raw.head.stride,
        dtype: default_dtype(),
    };
    let hp = header_path(tensor);
    std::fs::write(&hp, toml::to_string(&header).expect("header serializes"))
        .map_err(|e| Error::io(&hp, e))?;
    std::fs::write(tensor, bytes).map_err(|e| Error::io(tensor, e))
}

/// Greedy polygon NMS. Candidates are visited by descending confidence
/// (stable for ties) and dropped when their IoU with an already kept slot
/// exceeds `iou_threshold`.
pub fn polygon_nms<T: Scalar>(
    slots: &[PolygonSlot<T>],
    iou_threshold: T,
) -> Result<Vec<PolygonSlot<T>>> {
    for s in slots {
        s.validate()?;
    }
    let mut order: Vec<&PolygonSlot<T>> = slots.iter().collect();
    order.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut kept: Vec<PolygonSlot<T>> = Vec::new();
    for cand in order {
        let mut suppressed = false;
        for k in &kept {
            if polygon_iou_exact(cand, k)? > iou_threshold {
                suppressed = true;
                break;
            }
        }
        if !suppressed {
            kept.push(*cand);
        }
    }
    Ok(kept)
}
