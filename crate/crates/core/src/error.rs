use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),

    #[error("degenerate slot: polygon area {area:e} is below {min:e}")]
    DegenerateSlot { area: f64, min: f64 },

    #[error("slot polygon is self-intersecting (edges {0} and {1} cross)")]
    SelfIntersecting(usize, usize),

    #[error("entrance-left and entrance-right corners coincide")]
    CoincidentEntrance,

    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),

    #[error("invalid loss weights: {0}")]
    InvalidWeights(String),

    #[error("optimization diverged at step {step}: loss {loss} exceeds 10x initial {initial}")]
    Diverged {
        step: usize,
        loss: f64,
        initial: f64,
    },

    #[error("tensor shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("invalid camera calibration: {0}")]
    Calibration(String),

    #[error("ground point lies at the camera optical center")]
    AtOpticalCenter,

    #[error("image for camera {camera} is {got_w}x{got_h}, calibration expects {want_w}x{want_h}")]
    ImageSize {
        camera: usize,
        want_w: u32,
        want_h: u32,
        got_w: u32,
        got_h: u32,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl std::fmt::Display, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            msg: msg.into(),
        }
    }
}
