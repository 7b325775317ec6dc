//! Annotation files, PS2.0 conversion and label-aware augmentation.
//!
//! Annotation grammar (one token stream per line, `#` starts a comment):
//!
//! ```text
//! frame <scene|-> <WxH:meters|-> <image path, rest of line>
//! slot <type> x1 y1 x2 y2 x3 y3 x4 y4 [confidence]
//! ```
//!
//! `slot` lines belong to the preceding `frame`. Corners are topview raster
//! pixels in storage order (entrance-left, entrance-right, ending-left,
//! ending-right). The confidence is omitted when it is 1.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use image::{Rgb, RgbImage};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Point2, PolygonSlot, SlotType};
use crate::ipm::TopviewSpec;
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SceneTag {
    Normal,
    Indoor,
    Paving,
}

impl SceneTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SceneTag::Normal => "normal",
            SceneTag::Indoor => "indoor",
            SceneTag::Paving => "paving",
        }
    }
}

impl FromStr for SceneTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "normal" => Ok(SceneTag::Normal),
            "indoor" => Ok(SceneTag::Indoor),
            "paving" => Ok(SceneTag::Paving),
            _ => Err(format!(
                "unknown scene tag `{s}` (expected normal, indoor, paving or -)"
            )),
        }
    }
}

/// One annotated topview image.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFrame<T> {
    pub image_path: String,
    /// Raster geometry; `None` means the default spec.
    pub topview: Option<TopviewSpec<T>>,
    pub scene: Option<SceneTag>,
    pub slots: Vec<PolygonSlot<T>>,
}

impl<T: Scalar> LabeledFrame<T> {
    pub fn new(image_path: impl Into<String>, slots: Vec<PolygonSlot<T>>) -> Self {
        Self {
            image_path: image_path.into(),
            topview: None,
            scene: None,
            slots,
        }
    }

    pub fn spec(&self) -> TopviewSpec<T> {
        self.topview.unwrap_or_default()
    }
}

fn format_spec<T: Scalar>(spec: &TopviewSpec<T>) -> String {
    format!("{}x{}:{}", spec.width, spec.height, spec.coverage.0)
}

fn parse_spec<T: Scalar>(s: &str) -> std::result::Result<TopviewSpec<T>, String> {
    let bad = || format!("raster spec `{s}` is not of the form WxH:meters");
    let (dims, meters) = s.split_once(':').ok_or_else(bad)?;
    let (w, h) = dims.split_once('x').ok_or_else(bad)?;
    let w: u32 = w.parse().map_err(|_| bad())?;
    let h: u32 = h.parse().map_err(|_| bad())?;
    let m: T = meters.parse().map_err(|_| bad())?;
    TopviewSpec::centered(w, h, m).map_err(|e| e.to_string())
}

/// Renders frames in the annotation format.
pub fn format_annotations<T: Scalar>(frames: &[LabeledFrame<T>]) -> String {
    let mut out = String::new();
    for f in frames {
        let scene = f.scene.map_or("-", SceneTag::as_str);
        let spec = f
            .topview
            .as_ref()
            .map_or_else(|| "-".to_string(), format_spec);
        let _ = writeln!(out, "frame {scene} {spec} {}", f.image_path);
        for s in &f.slots {
            let _ = write!(out, "slot {}", s.slot_type);
            for c in &s.corners {
                let _ = write!(out, " {} {}", c.x, c.y);
            }
            if s.confidence != T::one() {
                let _ = write!(out, " {}", s.confidence);
            }
            out.push('\n');
        }
    }
    out
}

/// Parses annotation text; `source` names the input in error messages.
pub fn parse_annotations<T: Scalar>(text: &str, source: &str) -> Result<Vec<LabeledFrame<T>>> {
    let mut frames: Vec<LabeledFrame<T>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |msg: String| Error::parse(source, line, msg);
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (keyword, rest) = content
            .split_once(char::is_whitespace)
            .unwrap_or((content, ""));
        match keyword {
            "frame" => {
                let mut parts = rest.trim_start().splitn(3, char::is_whitespace);
                let scene = match parts.next().filter(|s| !s.is_empty()) {
                    None => return Err(err("frame: missing scene tag".into())),
                    Some("-") => None,
                    Some(s) => Some(s.parse().map_err(|e| err(format!("frame: {e}")))?),
                };
                let topview = match parts.next().filter(|s| !s.is_empty()) {
                    None => return Err(err("frame: missing raster spec".into())),
                    Some("-") => None,
                    Some(s) => Some(parse_spec(s).map_err(|e| err(format!("frame: {e}")))?),
                };
                let path = parts.next().map(str::trim).unwrap_or("");
                if path.is_empty() {
                    return Err(err("frame: missing image path".into()));
                }
                frames.push(LabeledFrame {
                    image_path: path.to_string(),
                    topview,
                    scene,
                    slots: Vec::new(),
                });
            }
            "slot" => {
                let frame = frames
                    .last_mut()
                    .ok_or_else(|| err("slot before any frame".into()))?;
                let tokens: Vec<&str> = rest.split_whitespace().collect();
                if tokens.len() != 9 && tokens.len() != 10 {
                    return Err(err(format!(
                        "slot: expected type, 8 coordinates and optional confidence, got {} fields",
                        tokens.len()
                    )));
                }
                let slot_type: SlotType = tokens[0]
                    .parse()
                    .map_err(|e| err(format!("slot type: {e}")))?;
                let mut v = [T::zero(); 8];
                for (k, tok) in tokens[1..9].iter().enumerate() {
                    const NAMES: [&str; 8] = ["x1", "y1", "x2", "y2", "x3", "y3", "x4", "y4"];
                    v[k] = tok
                        .parse()
                        .ok()
                        .filter(|x: &T| x.is_finite())
                        .ok_or_else(|| {
                            err(format!("slot {}: `{tok}` is not a finite number", NAMES[k]))
                        })?;
                }
                let confidence = match tokens.get(9) {
                    Some(tok) => tok
                        .parse()
                        .map_err(|_| err(format!("slot confidence: `{tok}` is not a number")))?,
                    None => T::one(),
                };
                let corners = std::array::from_fn(|i| Point2::new(v[2 * i], v[2 * i + 1]));
                let slot = PolygonSlot::new_unchecked(corners, slot_type, confidence);
                slot.validate().map_err(|e| err(format!("slot: {e}")))?;
                frame.slots.push(slot);
            }
            other => {
                return Err(err(format!(
                    "unknown record `{other}` (expected frame or slot)"
                )))
            }
        }
    }
    Ok(frames)
}

pub fn read_annotations<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<LabeledFrame<T>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, &path.display().to_string())
}

pub fn write_annotations<T: Scalar>(
    path: impl AsRef<Path>,
    frames: &[LabeledFrame<T>],
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_annotations(frames)).map_err(|e| Error::io(path, e))
}

/// Ending-line depths used to close PS2.0 entrance lines into polygons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ps20Config<T> {
    pub perpendicular_m: T,
    pub parallel_m: T,
    pub diagonal_m: T,
    /// PS2.0 topview images are 600x600 px over 10m x 10m.
    pub pixels_per_meter: T,
    pub image_size: u32,
}

impl<T: Scalar> Default for Ps20Config<T> {
    fn default() -> Self {
        Self {
            perpendicular_m: lit(5.0),
            parallel_m: lit(2.5),
            diagonal_m: lit(5.0),
            pixels_per_meter: lit(60.0),
            image_size: 600,
        }
    }
}

impl<T: Scalar> Ps20Config<T> {
    pub fn depth_px(&self, t: SlotType) -> T {
        let m = match t {
            SlotType::Perpendicular => self.perpendicular_m,
            SlotType::Parallel => self.parallel_m,
            SlotType::Diagonal => self.diagonal_m,
        };
        m * self.pixels_per_meter
    }

    pub fn spec(&self) -> Result<TopviewSpec<T>> {
        TopviewSpec::centered(
            self.image_size,
            self.image_size,
            lit::<T>(self.image_size as f64) / self.pixels_per_meter,
        )
    }
}

/// One PS2.0 slot: the entrance marking pair, the direction pointing into
/// the slot (degrees, image axes) and the slot type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ps20Marking<T> {
    pub entrance: [Point2<T>; 2],
    pub angle_deg: T,
    pub slot_type: SlotType,
}

impl<T: Scalar> FromStr for Ps20Marking<T> {
    type Err = String;

    /// `x1 y1 x2 y2 angle_deg type`
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let tokens: Vec<&str> = s.split_whitespace().collect();
        if tokens.len() != 6 {
            return Err(format!(
                "expected `x1 y1 x2 y2 angle_deg type`, got {} fields",
                tokens.len()
            ));
        }
        let mut v = [T::zero(); 5];
        for (k, tok) in tokens[..5].iter().enumerate() {
            const NAMES: [&str; 5] = ["x1", "y1", "x2", "y2", "angle_deg"];
            v[k] = tok
                .parse()
                .ok()
                .filter(|x: &T| x.is_finite())
                .ok_or_else(|| format!("{}: `{tok}` is not a finite number", NAMES[k]))?;
        }
        let slot_type = match tokens[5].parse::<usize>() {
            Ok(i) => SlotType::from_index(i)
                .ok_or_else(|| format!("type: unknown slot type index {i}"))?,
            Err(_) => tokens[5].parse().map_err(|e| format!("type: {e}"))?,
        };
        Ok(Self {
            entrance: [Point2::new(v[0], v[1]), Point2::new(v[2], v[3])],
            angle_deg: v[4],
            slot_type,
        })
    }
}

/// Markings of one PS2.0 image.
#[derive(Debug, Clone, PartialEq)]
pub struct Ps20Image<T> {
    pub image_path: String,
    pub markings: Vec<Ps20Marking<T>>,
}

/// Parses the intermediate export: `image <path>` headers, each followed by
/// one `x1 y1 x2 y2 angle_deg type` line per slot.
pub fn parse_ps20<T: Scalar>(text: &str, source: &str) -> Result<Vec<Ps20Image<T>>> {
    let mut images: Vec<Ps20Image<T>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(path) = content.strip_prefix("image") {
            let path = path.trim();
            if path.is_empty() {
                return Err(Error::parse(source, line, "image: missing path"));
            }
            images.push(Ps20Image {
                image_path: path.to_string(),
                markings: Vec::new(),
            });
            continue;
        }
        let img = images
            .last_mut()
            .ok_or_else(|| Error::parse(source, line, "slot record before any `image` line"))?;
        img.markings.push(
            content
                .parse()
                .map_err(|e: String| Error::parse(source, line, e))?,
        );
    }
    Ok(images)
}

/// A converted frame plus one message per skipped marking.
#[derive(Debug, Clone, PartialEq)]
pub struct Ps20Conversion<T> {
    pub frame: LabeledFrame<T>,
    pub warnings: Vec<String>,
}

/// Closes each entrance line into a four-corner slot by extruding it along
/// the marking direction by the type's standard depth.
pub fn convert_ps20<T: Scalar>(
    image: &Ps20Image<T>,
    cfg: &Ps20Config<T>,
) -> Result<Ps20Conversion<T>> {
    let spec = cfg.spec()?;
    let mut slots = Vec::with_capacity(image.markings.len());
    let mut warnings = Vec::new();
    for (i, m) in image.markings.iter().enumerate() {
        let [el, er] = m.entrance;
        if el.distance(er) <= T::epsilon() {
            let msg = format!(
                "{}: marking {i}: coincident entrance points, skipped",
                image.image_path
            );
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        let (s, c) = m.angle_deg.to_radians().sin_cos();
        let depth = Point2::new(c, s) * cfg.depth_px(m.slot_type);
        match PolygonSlot::new([el, er, el + depth, er + depth], m.slot_type) {
            Ok(slot) => slots.push(slot),
            Err(e) => {
                let msg = format!("{}: marking {i}: {e}, skipped", image.image_path);
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    Ok(Ps20Conversion {
        frame: LabeledFrame {
            image_path: image.image_path.clone(),
            topview: Some(spec),
            scene: None,
            slots,
        },
        warnings,
    })
}

/// A single augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentOp<T> {
    FlipLr,
    FlipUd,
    /// Counterclockwise as displayed, about the raster center.
    Rotate {
        degrees: T,
    },
    /// Hue shift (fraction of the hue circle) and saturation/value gains
    /// (`s *= 1 + ds`, `v *= 1 + dv`).
    Hsv {
        dh: T,
        ds: T,
        dv: T,
    },
}

/// Random augmentation policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig<T> {
    pub flip_lr_prob: f64,
    pub flip_ud_prob: f64,
    /// Rotation angle is drawn uniformly from `[0, max_rotation_deg]`.
    pub max_rotation_deg: T,
    /// Half-ranges for `(dh, ds, dv)`.
    pub hsv: (T, T, T),
    /// Slots with a corner further than this fraction of the raster size
    /// outside the raster are dropped after rotation.
    pub keep_margin: T,
}

impl<T: Scalar> Default for AugmentConfig<T> {
    fn default() -> Self {
        Self {
            flip_lr_prob: 0.5,
            flip_ud_prob: 0.5,
            max_rotation_deg: lit(25.0),
            hsv: (lit(0.015), lit(0.7), lit(0.4)),
            keep_margin: lit(0.1),
        }
    }
}

impl<T: Scalar> AugmentConfig<T> {
    /// Draws the operation sequence for one sample.
    pub fn sample_ops(&self, rng: &mut impl Rng) -> Vec<AugmentOp<T>> {
        let mut ops = Vec::new();
        if rng.gen_bool(self.flip_lr_prob) {
            ops.push(AugmentOp::FlipLr);
        }
        if rng.gen_bool(self.flip_ud_prob) {
            ops.push(AugmentOp::FlipUd);
        }
        let max = self.max_rotation_deg.to_f64_lossy();
        if max > 0.0 {
            ops.push(AugmentOp::Rotate {
                degrees: lit(rng.gen_range(0.0..=max)),
            });
        }
        let (h, s, v) = (
            self.hsv.0.to_f64_lossy(),
            self.hsv.1.to_f64_lossy(),
            self.hsv.2.to_f64_lossy(),
        );
        let mut draw = |r: f64| if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 };
        ops.push(AugmentOp::Hsv {
            dh: lit(draw(h)),
            ds: lit(draw(s)),
            dv: lit(draw(v)),
        });
        ops
    }
}

/// Mirrors a slot across the vertical raster midline. The mirrored left
/// corners become the right corners, so the roles are swapped.
pub fn flip_lr_slot<T: Scalar>(slot: &PolygonSlot<T>, width: T) -> PolygonSlot<T> {
    let m = slot.corners.map(|p| Point2::new(width - p.x, p.y));
    PolygonSlot {
        corners: [m[1], m[0], m[3], m[2]],
        ..*slot
    }
}

/// Mirrors a slot across the horizontal raster midline, swapping roles.
pub fn flip_ud_slot<T: Scalar>(slot: &PolygonSlot<T>, height: T) -> PolygonSlot<T> {
    let m = slot.corners.map(|p| Point2::new(p.x, height - p.y));
    PolygonSlot {
        corners: [m[1], m[0], m[3], m[2]],
        ..*slot
    }
}

/// Rotates raster coordinates about `center`, counterclockwise as displayed
/// (raster y points down).
fn rotate_raster_point<T: Scalar>(p: Point2<T>, center: Point2<T>, degrees: T) -> Point2<T> {
    let (s, c) = degrees.to_radians().sin_cos();
    let d = p - center;
    Point2::new(center.x + d.x * c + d.y * s, center.y - d.x * s + d.y * c)
}

pub fn rotate_slot<T: Scalar>(
    slot: &PolygonSlot<T>,
    center: Point2<T>,
    degrees: T,
) -> PolygonSlot<T> {
    PolygonSlot {
        corners: slot
            .corners
            .map(|p| rotate_raster_point(p, center, degrees)),
        ..*slot
    }
}

fn within_margin<T: Scalar>(slot: &PolygonSlot<T>, width: T, height: T, margin: T) -> bool {
    let (mx, my) = (width * margin, height * margin);
    slot.corners
        .iter()
        .all(|p| p.x >= -mx && p.x <= width + mx && p.y >= -my && p.y <= height + my)
}

/// Bilinear rotation of the whole image; pixels sampled from outside the
/// source are black.
pub fn rotate_image(img: &RgbImage, degrees: f64) -> RgbImage {
    if degrees == 0.0 {
        return img.clone();
    }
    let (w, h) = img.dimensions();
    let center = Point2::new(w as f64 / 2.0, h as f64 / 2.0);
    let mut out = RgbImage::new(w, h);
    for (x, y, px) in out.enumerate_pixels_mut() {
        // inverse map: rotate the destination pixel center back
        let src = rotate_raster_point(
            Point2::new(x as f64 + 0.5, y as f64 + 0.5),
            center,
            -degrees,
        );
        let (u, v) = (src.x - 0.5, src.y - 0.5);
        let (x0, y0) = (u.floor(), v.floor());
        let (fx, fy) = (u - x0, v - y0);
        let fetch = |xi: f64, yi: f64| -> [f64; 3] {
            if xi < 0.0 || yi < 0.0 || xi >= w as f64 || yi >= h as f64 {
                [0.0; 3]
            } else {
                img.get_pixel(xi as u32, yi as u32).0.map(f64::from)
            }
        };
        let (a, b, c, d) = (
            fetch(x0, y0),
            fetch(x0 + 1.0, y0),
            fetch(x0, y0 + 1.0),
            fetch(x0 + 1.0, y0 + 1.0),
        );
        *px = Rgb(std::array::from_fn(|ch| {
            let top = a[ch] * (1.0 - fx) + b[ch] * fx;
            let bot = c[ch] * (1.0 - fx) + d[ch] * fx;
            (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8
        }));
    }
    out
}

fn rgb_to_hsv(rgb: [u8; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(|v| v as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    [h, s, max]
}

fn hsv_to_rgb([h, s, v]: [f64; 3]) -> [u8; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match sector as u32 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r, g, b].map(|c| (c * 255.0).round().clamp(0.0, 255.0) as u8)
}

pub fn adjust_hsv(img: &RgbImage, dh: f64, ds: f64, dv: f64) -> RgbImage {
    let mut out = img.clone();
    for px in out.pixels_mut() {
        let [h, s, v] = rgb_to_hsv(px.0);
        px.0 = hsv_to_rgb([
            h + dh,
            (s * (1.0 + ds)).clamp(0.0, 1.0),
            (v * (1.0 + dv)).clamp(0.0, 1.0),
        ]);
    }
    out
}

/// Applies one operation to a frame and its topview image. The image must
/// match the frame's raster size.
pub fn augment<T: Scalar>(
    frame: &LabeledFrame<T>,
    image: &RgbImage,
    op: &AugmentOp<T>,
    keep_margin: T,
) -> Result<(LabeledFrame<T>, RgbImage)> {
    let spec = frame.spec();
    if image.dimensions() != (spec.width, spec.height) {
        return Err(Error::InvalidArgument(format!(
            "{}: image is {}x{}, frame raster is {}x{}",
            frame.image_path,
            image.width(),
            image.height(),
            spec.width,
            spec.height
        )));
    }
    let (w, h) = (lit::<T>(spec.width as f64), lit::<T>(spec.height as f64));
    let mut out = frame.clone();
    let img = match *op {
        AugmentOp::FlipLr => {
            out.slots = frame.slots.iter().map(|s| flip_lr_slot(s, w)).collect();
            image::imageops::flip_horizontal(image)
        }
        AugmentOp::FlipUd => {
            out.slots = frame.slots.iter().map(|s| flip_ud_slot(s, h)).collect();
            image::imageops::flip_vertical(image)
        }
        AugmentOp::Rotate { degrees } => {
            let center = Point2::new(w * lit(0.5), h * lit(0.5));
            out.slots = frame
                .slots
                .iter()
                .map(|s| rotate_slot(s, center, degrees))
                .filter(|s| within_margin(s, w, h, keep_margin))
                .collect();
            rotate_image(image, degrees.to_f64_lossy())
        }
        AugmentOp::Hsv { dh, ds, dv } => adjust_hsv(
            image,
            dh.to_f64_lossy(),
            ds.to_f64_lossy(),
            dv.to_f64_lossy(),
        ),
    };
    Ok((out, img))
}

/// Draws and applies a random augmentation sequence; identical seeds give
/// identical results.
pub fn augment_random<T: Scalar>(
    frame: &LabeledFrame<T>,
    image: &RgbImage,
    cfg: &AugmentConfig<T>,
    seed: u64,
) -> Result<(LabeledFrame<T>, RgbImage, Vec<AugmentOp<T>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ops = cfg.sample_ops(&mut rng);
    let (mut f, mut img) = (frame.clone(), image.clone());
    for op in &ops {
        (f, img) = augment(&f, &img, op, cfg.keep_margin)?;
    }
    Ok((f, img, ops))
}
