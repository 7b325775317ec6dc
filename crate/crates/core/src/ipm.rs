//! Flat-ground inverse perspective mapping from a fisheye surround rig.
//!
//! Frames:
//!
//! * ego ground frame: meters, `x` to the right of the vehicle, `y` forward,
//!   `z` up, origin at the vehicle center on the ground;
//! * camera frame: `z` along the optical axis, `x` image-right, `y` image-down;
//! * camera image: pixel centers at integer coordinates;
//! * topview raster: continuous coordinates, pixel `(i, j)` covers
//!   `[i, i+1) x [j, j+1)`, ego forward points to the top of the raster.

use std::path::Path;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::scalar::{lit, Scalar};

/// Newton iterations used to invert the lens polynomial.
pub const NEWTON_ITERATIONS: usize = 10;
pub const NEWTON_TOLERANCE: f64 = 1e-10;
/// Width of the linear blend band between neighbouring cameras.
pub const SEAM_BAND_M: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LensModel {
    /// Equidistant fisheye: `r = f * theta * (1 + k1 theta^2 + ... + k4 theta^8)`.
    #[default]
    KannalaBrandt,
    /// Rectilinear: `r = f * t * (1 + k1 t^2 + ... + k4 t^8)` with `t = tan(theta)`.
    Pinhole,
}

/// Rigid transform taking ego ground coordinates to camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T> {
    pub rotation: [[T; 3]; 3],
    pub translation: [T; 3],
}

impl<T: Scalar> Pose<T> {
    /// Camera mounted at `position` (ego frame) whose optical axis has
    /// heading `yaw_deg` (0 = forward, 90 = right) and is tilted
    /// `pitch_deg` below the horizon.
    pub fn from_mount(position: [T; 3], yaw_deg: T, pitch_deg: T) -> Self {
        let (sy, cy) = yaw_deg.to_radians().sin_cos();
        let (sp, cp) = pitch_deg.to_radians().sin_cos();
        let z = [sy * cp, cy * cp, -sp];
        let x = [cy, -sy, T::zero()];
        // y = z cross x
        let y = [
            z[1] * x[2] - z[2] * x[1],
            z[2] * x[0] - z[0] * x[2],
            z[0] * x[1] - z[1] * x[0],
        ];
        let rotation = [x, y, z];
        let translation = std::array::from_fn(|r| {
            -(0..3).fold(T::zero(), |a, c| a + rotation[r][c] * position[c])
        });
        Self {
            rotation,
            translation,
        }
    }

    pub fn apply(&self, p: [T; 3]) -> [T; 3] {
        std::array::from_fn(|r| {
            (0..3).fold(self.translation[r], |a, c| a + self.rotation[r][c] * p[c])
        })
    }

    /// Rotates a camera-frame direction into the ego frame.
    pub fn direction_to_ego(&self, d: [T; 3]) -> [T; 3] {
        std::array::from_fn(|c| (0..3).fold(T::zero(), |a, r| a + self.rotation[r][c] * d[r]))
    }

    /// Camera center in ego coordinates.
    pub fn center(&self) -> [T; 3] {
        let t = self.direction_to_ego(self.translation);
        [-t[0], -t[1], -t[2]]
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        if r.iter()
            .flatten()
            .chain(self.translation.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Calibration("non-finite pose".into()));
        }
        let tol = 1e-6;
        for i in 0..3 {
            for j in 0..3 {
                let dot = (0..3)
                    .fold(T::zero(), |a, k| a + r[i][k] * r[j][k])
                    .to_f64_lossy();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > tol {
                    return Err(Error::Calibration(format!(
                        "rotation is not orthonormal (row {i}·row {j} = {dot})"
                    )));
                }
            }
        }
        let det = (r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]))
            .to_f64_lossy();
        if (det - 1.0).abs() > tol {
            return Err(Error::Calibration(format!(
                "rotation determinant {det} != +1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisheyeCamera<T> {
    pub name: String,
    pub model: LensModel,
    /// `(fx, fy)` in pixels.
    pub focal: [T; 2],
    /// `(cx, cy)` in pixels.
    pub principal: [T; 2],
    /// `k1..k4`.
    pub distortion: [T; 4],
    pub pose: Pose<T>,
    /// `(width, height)` in pixels.
    pub image_size: (u32, u32),
    /// Full field of view; rays further than half of it from the axis are
    /// out of view.
    pub max_fov_deg: T,
}

/// Result of projecting a ground point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection<T> {
    Pixel(Point2<T>),
    OutOfView,
}

impl<T> Projection<T> {
    pub fn pixel(self) -> Option<Point2<T>> {
        match self {
            Projection::Pixel(p) => Some(p),
            Projection::OutOfView => None,
        }
    }
}

impl<T: Scalar> FisheyeCamera<T> {
    pub fn validate(&self) -> Result<()> {
        self.pose.validate()?;
        if !(self.focal[0] > T::zero() && self.focal[1] > T::zero()) {
            return Err(Error::Calibration(format!(
                "camera `{}`: focal lengths must be > 0",
                self.name
            )));
        }
        if self
            .principal
            .iter()
            .chain(self.distortion.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Calibration(format!(
                "camera `{}`: non-finite intrinsics",
                self.name
            )));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(Error::Calibration(format!(
                "camera `{}`: empty image size",
                self.name
            )));
        }
        let max = self.max_theta().to_f64_lossy();
        if !(max > 0.0) {
            return Err(Error::Calibration(format!(
                "camera `{}`: max_fov_deg must be > 0",
                self.name
            )));
        }
        if self.model == LensModel::Pinhole && max >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::Calibration(format!(
                "camera `{}`: pinhole field of view must be below 180 degrees",
                self.name
            )));
        }
        Ok(())
    }

    /// Largest valid angle from the optical axis, in radians.
    pub fn max_theta(&self) -> T {
        self.max_fov_deg.to_radians() * lit(0.5)
    }

    /// Normalized radial distance (before focal scaling) for an angle
    /// `theta` from the optical axis, with its derivative.
    fn radial(&self, theta: T) -> (T, T) {
        let k = &self.distortion;
        let (base, dbase) = match self.model {
            LensModel::KannalaBrandt => (theta, T::one()),
            LensModel::Pinhole => {
                let t = theta.tan();
                (t, T::one() + t * t)
            }
        };
        let b2 = base * base;
        let poly = T::one() + b2 * (k[0] + b2 * (k[1] + b2 * (k[2] + b2 * k[3])));
        let dpoly = base
            * (lit::<T>(2.0) * k[0]
                + b2 * (lit::<T>(4.0) * k[1]
                    + b2 * (lit::<T>(6.0) * k[2] + b2 * lit::<T>(8.0) * k[3])));
        (base * poly, dbase * (poly + base * dpoly))
    }

    /// Projects a camera-frame point.
    pub fn project_camera_point(&self, pc: [T; 3]) -> Result<Projection<T>> {
        let r = pc[0].hypot(pc[1]);
        if r.hypot(pc[2]) < lit(1e-12) {
            return Err(Error::AtOpticalCenter);
        }
        let theta = r.atan2(pc[2]);
        if theta > self.max_theta() {
            return Ok(Projection::OutOfView);
        }
        let (rd, _) = self.radial(theta);
        let (ux, uy) = if r > T::zero() {
            (pc[0] / r, pc[1] / r)
        } else {
            (T::zero(), T::zero())
        };
        Ok(Projection::Pixel(Point2::new(
            self.principal[0] + self.focal[0] * rd * ux,
            self.principal[1] + self.focal[1] * rd * uy,
        )))
    }

    /// Projects a point on the ground plane (`z = 0`, meters) to pixels.
    pub fn project_ground_point(&self, p: Point2<T>) -> Result<Projection<T>> {
        self.project_camera_point(self.pose.apply([p.x, p.y, T::zero()]))
    }

    /// Unit ray (camera frame) through a pixel, or `None` if the pixel lies
    /// outside the valid lens field.
    pub fn unproject(&self, px: Point2<T>) -> Option<[T; 3]> {
        let mx = (px.x - self.principal[0]) / self.focal[0];
        let my = (px.y - self.principal[1]) / self.focal[1];
        let rd = mx.hypot(my);
        if rd == T::zero() {
            return Some([T::zero(), T::zero(), T::one()]);
        }
        let theta = self.invert_radial(rd)?;
        let (s, c) = theta.sin_cos();
        Some([s * mx / rd, s * my / rd, c])
    }

    /// Newton solve of `radial(theta) = rd` on `[0, max_theta]`.
    fn invert_radial(&self, rd: T) -> Option<T> {
        let max = self.max_theta();
        let (rmax, _) = self.radial(max);
        if rd > rmax {
            return None;
        }
        let mut theta = match self.model {
            LensModel::KannalaBrandt => rd.min(max),
            LensModel::Pinhole => rd.atan().min(max),
        };
        let tol: T = lit(NEWTON_TOLERANCE);
        for _ in 0..NEWTON_ITERATIONS {
            let (f, df) = self.radial(theta);
            if df <= T::zero() {
                return None;
            }
            let step = (f - rd) / df;
            theta = (theta - step).max(T::zero()).min(max);
            if step.abs() < tol {
                break;
            }
        }
        let (f, _) = self.radial(theta);
        if (f - rd).abs() > lit(1e-6) {
            return None;
        }
        Some(theta)
    }

    /// Ground point seen through a pixel; `None` when the ray misses the
    /// ground in front of the camera.
    pub fn unproject_to_ground(&self, px: Point2<T>) -> Option<Point2<T>> {
        let d = self.pose.direction_to_ego(self.unproject(px)?);
        let c = self.pose.center();
        if d[2] >= T::zero() {
            return None;
        }
        let s = -c[2] / d[2];
        if s <= T::zero() {
            return None;
        }
        Some(Point2::new(c[0] + s * d[0], c[1] + s * d[1]))
    }

    /// Whether bilinear sampling at `px` stays inside the image.
    pub fn in_image(&self, px: Point2<T>) -> bool {
        let (w, h) = self.image_size;
        px.x >= T::zero()
            && px.y >= T::zero()
            && px.x <= lit((w - 1) as f64)
            && px.y <= lit((h - 1) as f64)
    }

    /// Ground point used as this camera's seat in the stitching policy:
    /// where the optical axis meets the ground, or the camera's footprint if
    /// the axis never does.
    pub fn ground_anchor(&self) -> Point2<T> {
        let c = self.pose.center();
        let axis = self.pose.direction_to_ego([T::zero(), T::zero(), T::one()]);
        if axis[2] < T::zero() && c[2] > T::zero() {
            let s = -c[2] / axis[2];
            Point2::new(c[0] + s * axis[0], c[1] + s * axis[1])
        } else {
            Point2::new(c[0], c[1])
        }
    }
}

/// Topview raster geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopviewSpec<T> {
    pub width: u32,
    pub height: u32,
    /// Ground coverage `(width_m, height_m)`.
    pub coverage: (T, T),
    /// Ego position in raster coordinates.
    pub origin: Point2<T>,
}

impl<T: Scalar> Default for TopviewSpec<T> {
    /// 640x640 px over 25m x 25m with the ego at the center.
    fn default() -> Self {
        Self::centered(640, 640, lit(25.0)).expect("default spec is valid")
    }
}

impl<T: Scalar> TopviewSpec<T> {
    /// Ego-centered raster whose width covers `width_m`; the height
    /// coverage follows from square pixels.
    pub fn centered(width: u32, height: u32, width_m: T) -> Result<Self> {
        let spec = Self {
            width,
            height,
            coverage: (width_m, width_m * lit(height as f64) / lit(width as f64)),
            origin: Point2::new(lit(width as f64 / 2.0), lit(height as f64 / 2.0)),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument(
                "topview resolution must be non-zero".into(),
            ));
        }
        let (cw, ch) = (
            self.coverage.0.to_f64_lossy(),
            self.coverage.1.to_f64_lossy(),
        );
        if !(cw > 0.0 && ch > 0.0) || !self.origin.is_finite() {
            return Err(Error::InvalidArgument(
                "topview coverage must be positive".into(),
            ));
        }
        let (mx, my) = (cw / self.width as f64, ch / self.height as f64);
        if (mx - my).abs() > 1e-9 * mx {
            return Err(Error::InvalidArgument(format!(
                "topview pixels are not square ({mx} m/px horizontally, {my} m/px vertically)"
            )));
        }
        Ok(())
    }

    pub fn meters_per_pixel(&self) -> T {
        self.coverage.0 / lit(self.width as f64)
    }

    /// Meters to raster coordinates; ego forward (+y) is raster up.
    pub fn ground_to_raster(&self, p: Point2<T>) -> Point2<T> {
        let m = self.meters_per_pixel();
        Point2::new(self.origin.x + p.x / m, self.origin.y - p.y / m)
    }

    pub fn raster_to_ground(&self, p: Point2<T>) -> Point2<T> {
        let m = self.meters_per_pixel();
        Point2::new((p.x - self.origin.x) * m, (self.origin.y - p.y) * m)
    }

    /// Ground point under the center of pixel `(col, row)`.
    pub fn pixel_center_ground(&self, col: u32, row: u32) -> Point2<T> {
        self.raster_to_ground(Point2::new(lit(col as f64 + 0.5), lit(row as f64 + 0.5)))
    }
}

impl std::str::FromStr for TopviewSpec<f64> {
    type Err = Error;

    /// `WxH:meters`, e.g. `640x640:25`.
    fn from_str(s: &str) -> Result<Self> {
        let bad =
            || Error::InvalidArgument(format!("topview spec `{s}` is not of the form WxH:meters"));
        let (dims, meters) = s.split_once(':').ok_or_else(bad)?;
        let (w, h) = dims.split_once('x').ok_or_else(bad)?;
        let w: u32 = w.trim().parse().map_err(|_| bad())?;
        let h: u32 = h.trim().parse().map_err(|_| bad())?;
        let m: f64 = meters.trim().parse().map_err(|_| bad())?;
        Self::centered(w, h, m)
    }
}

/// A set of calibrated cameras, conventionally front, rear, left, right.
#[derive(Debug, Clone, PartialEq)]
pub struct Rig<T> {
    pub cameras: Vec<FisheyeCamera<T>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RigFile {
    camera: Vec<CameraRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraRecord {
    name: String,
    #[serde(default)]
    model: LensModel,
    image_size: [u32; 2],
    focal: [f64; 2],
    principal: [f64; 2],
    distortion: [f64; 4],
    #[serde(default = "default_fov")]
    max_fov_deg: f64,
    /// Row-major 3x3, ego ground frame to camera frame.
    rotation: [f64; 9],
    translation: [f64; 3],
}

fn default_fov() -> f64 {
    190.0
}

impl<T: Scalar> Rig<T> {
    pub fn new(cameras: Vec<FisheyeCamera<T>>) -> Result<Self> {
        if cameras.is_empty() {
            return Err(Error::Calibration("rig has no cameras".into()));
        }
        for c in &cameras {
            c.validate()?;
        }
        Ok(Self { cameras })
    }

    /// Parses the TOML calibration format (see the README).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: RigFile = toml::from_str(text).map_err(|e| Error::Calibration(e.to_string()))?;
        let cams = file
            .camera
            .into_iter()
            .map(|c| {
                let r = c.rotation.map(lit::<T>);
                FisheyeCamera {
                    name: c.name,
                    model: c.model,
                    focal: c.focal.map(lit),
                    principal: c.principal.map(lit),
                    distortion: c.distortion.map(lit),
                    pose: Pose {
                        rotation: [[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]],
                        translation: c.translation.map(lit),
                    },
                    image_size: (c.image_size[0], c.image_size[1]),
                    max_fov_deg: lit(c.max_fov_deg),
                }
            })
            .collect();
        Self::new(cams)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Calibration(msg) => Error::Calibration(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        let file = RigFile {
            camera: self
                .cameras
                .iter()
                .map(|c| {
                    let r = c.pose.rotation;
                    CameraRecord {
                        name: c.name.clone(),
                        model: c.model,
                        image_size: [c.image_size.0, c.image_size.1],
                        focal: c.focal.map(T::to_f64_lossy),
                        principal: c.principal.map(T::to_f64_lossy),
                        distortion: c.distortion.map(T::to_f64_lossy),
                        max_fov_deg: c.max_fov_deg.to_f64_lossy(),
                        rotation: [r[0], r[1], r[2]]
                            .concat()
                            .try_into()
                            .map(|a: [T; 9]| a.map(T::to_f64_lossy))
                            .unwrap(),
                        translation: c.pose.translation.map(T::to_f64_lossy),
                    }
                })
                .collect(),
        };
        toml::to_string(&file).expect("rig serializes")
    }
}

/// One camera's contribution to a topview pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemapSample<T> {
    pub camera: usize,
    /// Source pixel (sub-pixel, inside the image).
    pub source: Point2<T>,
    pub weight: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RemapEntry<T> {
    Uncovered,
    Single(RemapSample<T>),
    /// Feathered seam pixel; weights sum to 1.
    Blend(RemapSample<T>, RemapSample<T>),
}

impl<T: Scalar> RemapEntry<T> {
    pub fn samples(&self) -> impl Iterator<Item = &RemapSample<T>> {
        let (a, b) = match self {
            RemapEntry::Uncovered => (None, None),
            RemapEntry::Single(s) => (Some(s), None),
            RemapEntry::Blend(s, t) => (Some(s), Some(t)),
        };
        a.into_iter().chain(b)
    }

    pub fn is_covered(&self) -> bool {
        !matches!(self, RemapEntry::Uncovered)
    }
}

/// Per-pixel lookup from topview raster to camera images.
#[derive(Debug, Clone, PartialEq)]
pub struct RemapTable<T> {
    pub width: u32,
    pub height: u32,
    /// Row-major entries.
    pub entries: Vec<RemapEntry<T>>,
    pub camera_sizes: Vec<(u32, u32)>,
    /// Number of pixels each camera contributes to.
    pub camera_coverage: Vec<usize>,
    pub warnings: Vec<String>,
}

impl<T: Scalar> RemapTable<T> {
    pub fn entry(&self, col: u32, row: u32) -> &RemapEntry<T> {
        &self.entries[(row * self.width + col) as usize]
    }

    pub fn covered_fraction(&self) -> f64 {
        let n = self.entries.iter().filter(|e| e.is_covered()).count();
        n as f64 / self.entries.len() as f64
    }
}

/// Builds the remap table: each topview pixel goes to the covering camera
/// whose ground anchor is nearest, with linear feathering across a
/// [`SEAM_BAND_M`] band around the boundary with the runner-up.
pub fn build_remap_table<T: Scalar>(rig: &Rig<T>, spec: &TopviewSpec<T>) -> Result<RemapTable<T>> {
    spec.validate()?;
    for c in &rig.cameras {
        c.validate()?;
    }
    let anchors: Vec<Point2<T>> = rig
        .cameras
        .iter()
        .map(FisheyeCamera::ground_anchor)
        .collect();
    let half_band: T = lit(SEAM_BAND_M / 2.0);
    let band: T = lit(SEAM_BAND_M);

    let rows: Vec<Vec<RemapEntry<T>>> = (0..spec.height)
        .into_par_iter()
        .map(|row| {
            let mut out = Vec::with_capacity(spec.width as usize);
            let mut hits: Vec<(T, usize, Point2<T>)> = Vec::with_capacity(rig.cameras.len());
            for col in 0..spec.width {
                let g = spec.pixel_center_ground(col, row);
                hits.clear();
                for (k, cam) in rig.cameras.iter().enumerate() {
                    if let Ok(Projection::Pixel(px)) = cam.project_ground_point(g) {
                        if cam.in_image(px) {
                            hits.push((g.distance(anchors[k]), k, px));
                        }
                    }
                }
                // stable sort keeps camera order on distance ties
                hits.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
                let entry = match hits.as_slice() {
                    [] => RemapEntry::Uncovered,
                    [(_, k, px)] => RemapEntry::Single(RemapSample {
                        camera: *k,
                        source: *px,
                        weight: T::one(),
                    }),
                    [(d1, k1, p1), (d2, k2, p2), ..] => {
                        // distance from g to the perpendicular bisector of the two anchors
                        let sep = anchors[*k1].distance(anchors[*k2]);
                        let s = if sep > T::zero() {
                            (*d2 * *d2 - *d1 * *d1) / (lit::<T>(2.0) * sep)
                        } else {
                            half_band
                        };
                        if s >= half_band {
                            RemapEntry::Single(RemapSample {
                                camera: *k1,
                                source: *p1,
                                weight: T::one(),
                            })
                        } else {
                            let w1 = lit::<T>(0.5) + s / band;
                            RemapEntry::Blend(
                                RemapSample {
                                    camera: *k1,
                                    source: *p1,
                                    weight: w1,
                                },
                                RemapSample {
                                    camera: *k2,
                                    source: *p2,
                                    weight: T::one() - w1,
                                },
                            )
                        }
                    }
                };
                out.push(entry);
            }
            out
        })
        .collect();

    let entries: Vec<RemapEntry<T>> = rows.into_iter().flatten().collect();
    let mut camera_coverage = vec![0usize; rig.cameras.len()];
    for e in &entries {
        for s in e.samples() {
            camera_coverage[s.camera] += 1;
        }
    }
    let mut warnings = Vec::new();
    for (k, &n) in camera_coverage.iter().enumerate() {
        if n == 0 {
            let msg = format!(
                "camera {k} (`{}`) covers no topview pixel",
                rig.cameras[k].name
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok(RemapTable {
        width: spec.width,
        height: spec.height,
        entries,
        camera_sizes: rig.cameras.iter().map(|c| c.image_size).collect(),
        camera_coverage,
        warnings,
    })
}

/// Bilinear sample with pixel centers at integer coordinates.
fn bilinear(img: &RgbImage, p: Point2<f64>) -> [f64; 3] {
    let (w, h) = img.dimensions();
    let x0 = p.x.floor().clamp(0.0, (w - 1) as f64);
    let y0 = p.y.floor().clamp(0.0, (h - 1) as f64);
    let (fx, fy) = (p.x - x0, p.y - y0);
    let (x0, y0) = (x0 as u32, y0 as u32);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let px = |x: u32, y: u32| img.get_pixel(x, y).0;
    let (a, b, c, d) = (px(x0, y0), px(x1, y0), px(x0, y1), px(x1, y1));
    std::array::from_fn(|ch| {
        let top = a[ch] as f64 * (1.0 - fx) + b[ch] as f64 * fx;
        let bot = c[ch] as f64 * (1.0 - fx) + d[ch] as f64 * fx;
        top * (1.0 - fy) + bot * fy
    })
}

/// Samples the camera images through `table`; uncovered pixels are black.
pub fn synthesize_topview<T: Scalar>(
    table: &RemapTable<T>,
    images: &[RgbImage],
) -> Result<RgbImage> {
    if images.len() != table.camera_sizes.len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} camera images, got {}",
            table.camera_sizes.len(),
            images.len()
        )));
    }
    for (k, (img, &(w, h))) in images.iter().zip(&table.camera_sizes).enumerate() {
        if img.dimensions() != (w, h) {
            return Err(Error::ImageSize {
                camera: k,
                want_w: w,
                want_h: h,
                got_w: img.width(),
                got_h: img.height(),
            });
        }
    }
    let width = table.width as usize;
    let mut buf = vec![0u8; width * table.height as usize * 3];
    buf.par_chunks_mut(width * 3)
        .enumerate()
        .for_each(|(row, line)| {
            for col in 0..width {
                let entry = &table.entries[row * width + col];
                if !entry.is_covered() {
                    continue;
                }
                let mut acc = [0.0f64; 3];
                for s in entry.samples() {
                    let v = bilinear(&images[s.camera], s.source.cast());
                    let w = s.weight.to_f64_lossy();
                    for ch in 0..3 {
                        acc[ch] += w * v[ch];
                    }
                }
                for ch in 0..3 {
                    line[col * 3 + ch] = acc[ch].round().clamp(0.0, 255.0) as u8;
                }
            }
        });
    Ok(RgbImage::from_raw(table.width, table.height, buf).expect("buffer sized to raster"))
}

/// Renders what `cam` sees of a painted ground plane, averaging
/// `supersample`² rays per pixel. Rays that miss the ground get `sky`.
///
/// Used to produce synthetic camera frames for reconstruction checks.
pub fn render_ground_view<T: Scalar>(
    cam: &FisheyeCamera<T>,
    supersample: u32,
    sky: [u8; 3],
    ground: impl Fn(Point2<f64>) -> [f64; 3] + Sync,
) -> RgbImage {
    let (w, h) = cam.image_size;
    let n = supersample.max(1);
    let mut buf = vec![0u8; (w * h * 3) as usize];
    buf.par_chunks_mut((w * 3) as usize)
        .enumerate()
        .for_each(|(v, line)| {
            for u in 0..w {
                let mut acc = [0.0f64; 3];
                for sy in 0..n {
                    for sx in 0..n {
                        let px = Point2::new(
                            lit::<T>(u as f64 - 0.5 + (sx as f64 + 0.5) / n as f64),
                            lit::<T>(v as f64 - 0.5 + (sy as f64 + 0.5) / n as f64),
                        );
                        let c = match cam.unproject_to_ground(px) {
                            Some(g) => ground(g.cast()),
                            None => sky.map(f64::from),
                        };
                        for ch in 0..3 {
                            acc[ch] += c[ch];
                        }
                    }
                }
                let m = (n * n) as f64;
                for ch in 0..3 {
                    line[(u * 3) as usize + ch] = (acc[ch] / m).round().clamp(0.0, 255.0) as u8;
                }
            }
        });
    RgbImage::from_raw(w, h, buf).expect("buffer sized to image")
}
