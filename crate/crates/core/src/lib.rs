//! Parking-slot detection toolkit: polygon slot geometry, overlap and loss
//! functions, fisheye-to-topview stitching, annotation I/O and augmentation,
//! detection-head decoding, and evaluation.
//!
//! The core is generic over the scalar; the aliases below fix it to `f64`
//! (the default everywhere) or `f32`.

pub mod dataset;
pub mod decode;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod iou;
pub mod ipm;
pub mod loss;
pub mod render;
pub mod scalar;

pub use error::{Error, Result};
pub use geometry::{Point2, PolygonSlot, RelativeSlot, SlotType};
pub use scalar::Scalar;

pub type Point = Point2<f64>;
pub type Slot = PolygonSlot<f64>;
pub type Relative = RelativeSlot<f64>;
pub type Camera = ipm::FisheyeCamera<f64>;
pub type Rig = ipm::Rig<f64>;
pub type Topview = ipm::TopviewSpec<f64>;
pub type Frame = dataset::LabeledFrame<f64>;

pub type Point32 = Point2<f32>;
pub type Slot32 = PolygonSlot<f32>;
pub type Relative32 = RelativeSlot<f32>;
pub type Camera32 = ipm::FisheyeCamera<f32>;
pub type Rig32 = ipm::Rig<f32>;
pub type Topview32 = ipm::TopviewSpec<f32>;
pub type Frame32 = dataset::LabeledFrame<f32>;
