//! File plumbing shared by the subcommands: slot literals, image loading,
//! and all-or-nothing output.

use std::fmt;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use image::{ImageFormat, RgbImage};
use parkslot::{Point2, PolygonSlot, SlotType};
use serde::Deserialize;

/// Marks an error as caused by bad input (exit code 2) rather than by a
/// failure while doing the work.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SlotLiteral {
    Corners([[f64; 2]; 4]),
    Full {
        corners: [[f64; 2]; 4],
        #[serde(default, rename = "type")]
        slot_type: SlotType,
        #[serde(default = "one")]
        confidence: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Parses a slot literal: either a bare corner list
/// `[[elx,ely],[erx,ery],[endlx,endly],[endrx,endry]]` or an object
/// `{"corners": [...], "type": "parallel", "confidence": 0.9}`. A leading
/// `@` reads the literal from a file.
pub fn parse_slot(arg: &str) -> Result<PolygonSlot<f64>> {
    let text = match arg.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).map_err(|e| invalid(format!("{path}: {e}")))?,
        None => arg.to_string(),
    };
    let lit: SlotLiteral = serde_json::from_str(&text)
        .map_err(|e| invalid(format!("malformed slot literal `{arg}`: {e}")))?;
    let (corners, slot_type, confidence) = match lit {
        SlotLiteral::Corners(c) => (c, SlotType::default(), 1.0),
        SlotLiteral::Full {
            corners,
            slot_type,
            confidence,
        } => (corners, slot_type, confidence),
    };
    if !(0.0..=1.0).contains(&confidence) {
        return Err(invalid(format!(
            "slot confidence {confidence} outside [0, 1]"
        )));
    }
    let slot = PolygonSlot::new(corners.map(|[x, y]| Point2::new(x, y)), slot_type)?;
    Ok(slot.with_confidence(confidence))
}

pub fn slot_json(s: &PolygonSlot<f64>) -> String {
    let c: Vec<String> = s
        .corners
        .iter()
        .map(|p| format!("[{:.6},{:.6}]", p.x, p.y))
        .collect();
    format!(
        "{{\"corners\":[{}],\"type\":\"{}\",\"confidence\":{:.6}}}",
        c.join(","),
        s.slot_type,
        s.confidence
    )
}

/// Loads an RGB image; unreadable or undecodable files are input errors.
pub fn load_image(path: &Path) -> Result<RgbImage> {
    let bytes = std::fs::read(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let img =
        image::load_from_memory(&bytes).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    Ok(img.to_rgb8())
}

pub fn png_bytes(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .context("encoding PNG")?;
    Ok(buf.into_inner())
}

/// Output files are written to hidden siblings of their destination and
/// only renamed into place by `commit`, so a failing command leaves nothing.
#[derive(Default)]
pub struct Outputs {
    staged: Vec<(PathBuf, PathBuf)>,
}

impl Outputs {
    pub fn stage(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        let name = path
            .file_name()
            .with_context(|| format!("{} is not a file path", path.display()))?;
        let mut tmp_name = std::ffi::OsString::from(".");
        tmp_name.push(name);
        tmp_name.push(format!(".partial-{}", std::process::id()));
        let tmp = path.with_file_name(tmp_name);
        std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.staged.push((tmp, path.to_path_buf()));
        Ok(())
    }

    pub fn commit(mut self) -> Result<()> {
        for (tmp, path) in std::mem::take(&mut self.staged) {
            std::fs::rename(&tmp, &path).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        for (tmp, _) in &self.staged {
            let _ = std::fs::remove_file(tmp);
        }
    }
}

/// `RRGGBB` hex or `r,g,b`.
pub fn parse_color(s: &str) -> std::result::Result<[u8; 3], String> {
    let bad = || format!("color `{s}` is not RRGGBB or r,g,b");
    if let Some(hex) = s
        .strip_prefix('#')
        .or(Some(s))
        .filter(|h| h.len() == 6 && !h.contains(','))
    {
        let v = u32::from_str_radix(hex, 16).map_err(|_| bad())?;
        return Ok([(v >> 16) as u8, (v >> 8) as u8, v as u8]);
    }
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut out = [0u8; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|_| bad())?;
    }
    Ok(out)
}
