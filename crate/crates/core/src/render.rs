//! Slot overlays on topview rasters: outline, highlighted entrance line,
//! entrance angle and confidence labels.

use image::{Rgb, RgbImage};

use crate::geometry::{Point2, PolygonSlot};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverlayStyle {
    pub polygon: [u8; 3],
    pub entrance: [u8; 3],
    /// Confidence labels; the angle label uses the entrance color.
    pub text: [u8; 3],
    pub line_width: u32,
    /// Glyph cell size multiplier (glyphs are 3×5 cells).
    pub text_scale: u32,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self {
            polygon: [0, 0, 255],
            entrance: [0, 255, 0],
            text: [0, 0, 255],
            line_width: 2,
            text_scale: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RenderReport {
    pub slots: usize,
    /// Slots with at least one corner outside the raster.
    pub clipped: usize,
}

/// Entrance angle as seen on a raster whose rows grow downward: the ego
/// convention (counterclockwise from lateral, forward up) in degrees.
pub fn raster_entrance_angle<T: Scalar>(slot: &PolygonSlot<T>) -> Option<f64> {
    let d = (slot.entrance_right() - slot.entrance_left()).cast::<f64>();
    if !d.is_finite() || (d.x == 0.0 && d.y == 0.0) {
        return None;
    }
    let deg = (-d.y).atan2(d.x).to_degrees();
    Some(if deg <= -180.0 { deg + 360.0 } else { deg })
}

/// Draws every slot onto `img`. Geometry outside the raster is clipped.
pub fn draw_slots<T: Scalar>(
    img: &mut RgbImage,
    slots: &[PolygonSlot<T>],
    style: &OverlayStyle,
) -> RenderReport {
    let mut report = RenderReport {
        slots: slots.len(),
        clipped: 0,
    };
    let (w, h) = (img.width() as f64, img.height() as f64);
    for slot in slots {
        let s = slot.cast::<f64>();
        if s.corners
            .iter()
            .any(|c| !(c.x >= -0.5 && c.y >= -0.5 && c.x < w - 0.5 && c.y < h - 0.5))
        {
            report.clipped += 1;
        }
        let o = s.outline();
        for i in 0..4 {
            draw_line(img, o[i], o[(i + 1) % 4], style.line_width, style.polygon);
        }
        draw_line(
            img,
            s.entrance_left(),
            s.entrance_right(),
            style.line_width,
            style.entrance,
        );

        let scale = style.text_scale.max(1) as f64;
        let c = s.centroid();
        if c.is_finite() {
            let label = format!("{:.2}", s.confidence);
            draw_text_centered(img, &label, c, style.text_scale, style.text);
        }
        if let Some(angle) = raster_entrance_angle(&s) {
            // Place the angle outside the slot, beyond the entrance line.
            let mid = (s.entrance_left() + s.entrance_right()) * 0.5;
            let away = mid - c;
            let n = away.norm();
            if n.is_finite() && n > 0.0 {
                let gap = style.line_width as f64 + 5.0 * scale;
                let at = mid + away * (gap / n);
                draw_text_centered(
                    img,
                    &format!("{angle:.1}°"),
                    at,
                    style.text_scale,
                    style.entrance,
                );
            }
        }
    }
    report
}

/// Thick line: a `width`-pixel square brush stamped along a Bresenham walk
/// of the segment clipped to the raster.
pub fn draw_line(img: &mut RgbImage, a: Point2<f64>, b: Point2<f64>, width: u32, color: [u8; 3]) {
    let margin = width as f64 + 1.0;
    let bounds = (
        -margin,
        -margin,
        img.width() as f64 + margin,
        img.height() as f64 + margin,
    );
    let Some((a, b)) = clip_segment(a, b, bounds) else {
        return;
    };
    let (mut x0, mut y0) = (a.x.round() as i64, a.y.round() as i64);
    let (x1, y1) = (b.x.round() as i64, b.y.round() as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let w = width.max(1) as i64;
    let lo = (w - 1) / 2;
    loop {
        for oy in -lo..w - lo {
            for ox in -lo..w - lo {
                put(img, x0 + ox, y0 + oy, color);
            }
        }
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u64) < img.width() as u64 && (y as u64) < img.height() as u64 {
        img.put_pixel(x as u32, y as u32, Rgb(color));
    }
}

/// Liang–Barsky clip against `(xmin, ymin, xmax, ymax)`.
fn clip_segment(
    a: Point2<f64>,
    b: Point2<f64>,
    (x0, y0, x1, y1): (f64, f64, f64, f64),
) -> Option<(Point2<f64>, Point2<f64>)> {
    if !a.is_finite() || !b.is_finite() {
        return None;
    }
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [
        (-d.x, a.x - x0),
        (d.x, x1 - a.x),
        (-d.y, a.y - y0),
        (d.y, y1 - a.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 <= t1).then(|| (a + d * t0, a + d * t1))
}

// 3×5 glyphs, one row per entry, high bit on the left.
fn glyph(c: char) -> Option<[u8; 5]> {
    Some(match c {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b001, 0b001, 0b001],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        '-' => [0b000, 0b000, 0b111, 0b000, 0b000],
        '°' => [0b111, 0b101, 0b111, 0b000, 0b000],
        ' ' => [0; 5],
        _ => return None,
    })
}

/// Pixel extent of `text` at `scale`.
pub fn text_size(text: &str, scale: u32) -> (u32, u32) {
    let n = text.chars().filter(|&c| glyph(c).is_some()).count() as u32;
    let s = scale.max(1);
    (if n == 0 { 0 } else { (4 * n - 1) * s }, 5 * s)
}

/// Draws `text` with its top-left corner at `(x, y)`; unknown characters
/// are skipped.
pub fn draw_text(img: &mut RgbImage, text: &str, x: i64, y: i64, scale: u32, color: [u8; 3]) {
    let s = scale.max(1) as i64;
    let mut pen = x;
    for rows in text.chars().filter_map(glyph) {
        for (r, bits) in rows.iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) == 0 {
                    continue;
                }
                for py in 0..s {
                    for px in 0..s {
                        put(img, pen + col * s + px, y + r as i64 * s + py, color);
                    }
                }
            }
        }
        pen += 4 * s;
    }
}

fn draw_text_centered(img: &mut RgbImage, text: &str, at: Point2<f64>, scale: u32, color: [u8; 3]) {
    let (w, h) = text_size(text, scale);
    let x = (at.x - w as f64 / 2.0).round();
    let y = (at.y - h as f64 / 2.0).round();
    if x.abs() < 1e9 && y.abs() < 1e9 {
        draw_text(img, text, x as i64, y as i64, scale, color);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SlotType;

    fn blank() -> RgbImage {
        RgbImage::from_pixel(200, 200, Rgb([10, 10, 10]))
    }

    #[test]
    fn empty_list_leaves_image_untouched() {
        let mut img = blank();
        draw_slots::<f64>(&mut img, &[], &OverlayStyle::default());
        assert_eq!(img, blank());
    }

    #[test]
    fn lines_are_clipped_not_walked() {
        let mut img = blank();
        let a = Point2::new(-1e12, 100.0);
        let b = Point2::new(1e12, 100.0);
        draw_line(&mut img, a, b, 1, [255, 0, 0]);
        assert!((0..200).all(|x| img.get_pixel(x, 100).0 == [255, 0, 0]));
        assert_eq!(img.get_pixel(0, 99).0, [10, 10, 10]);
    }

    #[test]
    fn angle_uses_upward_forward() {
        // Entrance drawn up-right on the raster is +45° in the ego frame.
        let s: PolygonSlot<f64> = PolygonSlot::from_xy(
            [[0.0, 10.0], [10.0, 0.0], [-10.0, 0.0], [0.0, -10.0]],
            SlotType::Diagonal,
        )
        .unwrap();
        assert!((raster_entrance_angle(&s).unwrap() - 45.0).abs() < 1e-12);
    }

    #[test]
    fn text_extent() {
        assert_eq!(text_size("0.87", 2), (30, 10));
        assert_eq!(text_size("", 3), (0, 15));
        let mut img = blank();
        draw_text(&mut img, "1", 0, 0, 1, [255; 3]);
        assert_eq!(img.get_pixel(1, 0).0, [255; 3]);
        assert_eq!(img.get_pixel(0, 0).0, [10; 3]);
    }
}
