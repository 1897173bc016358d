//! Flat-colour raster helpers over `image::RgbaImage`.

use crate::model::{BBox, Mask, Rgb};
use image::{ImageFormat, Rgba, RgbaImage};
use sha2::{Digest, Sha256};
use std::io::Cursor;
use thiserror::Error;

pub type Image = RgbaImage;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RasterError {
    #[error("PNG decode failed: {0}")]
    Decode(String),
    #[error("image is empty")]
    Empty,
}

pub fn blank(width: u32, height: u32, bg: Rgb) -> Image {
    let [r, g, b] = bg.0;
    RgbaImage::from_pixel(width, height, Rgba([r, g, b, 255]))
}

pub fn in_bounds(img: &Image, x: i32, y: i32) -> bool {
    x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height()
}

pub fn rgb_at(img: &Image, x: i32, y: i32) -> Rgb {
    let p = img.get_pixel(x as u32, y as u32).0;
    Rgb([p[0], p[1], p[2]])
}

/// Sets a pixel if it lies inside the image.
pub fn put(img: &mut Image, x: i32, y: i32, c: Rgb) {
    if in_bounds(img, x, y) {
        let [r, g, b] = c.0;
        img.put_pixel(x as u32, y as u32, Rgba([r, g, b, 255]));
    }
}

/// Mixes `c` into the pixel with weight `alpha` (0..=1); result is opaque.
pub fn blend(img: &mut Image, x: i32, y: i32, c: Rgb, alpha: f64) {
    if !in_bounds(img, x, y) {
        return;
    }
    let old = rgb_at(img, x, y);
    let mix = |a: u8, b: u8| (f64::from(a) * (1.0 - alpha) + f64::from(b) * alpha).round() as u8;
    put(img, x, y, Rgb([mix(old.0[0], c.0[0]), mix(old.0[1], c.0[1]), mix(old.0[2], c.0[2])]));
}

pub fn luminance(img: &Image, x: i32, y: i32) -> f64 {
    rgb_at(img, x, y).luminance()
}

pub fn image_bbox(img: &Image) -> BBox {
    BBox::new(0, img.width() as i32 - 1, 0, img.height() as i32 - 1)
}

pub fn encode_png(img: &Image) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).expect("in-memory PNG encoding cannot fail");
    buf.into_inner()
}

pub fn decode_png(bytes: &[u8]) -> Result<Image, RasterError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| RasterError::Decode(e.to_string()))?
        .to_rgba8();
    if img.width() == 0 || img.height() == 0 {
        return Err(RasterError::Empty);
    }
    Ok(img)
}

/// SHA-256 over dimensions and raw RGBA bytes; independent of PNG encoding.
pub fn pixel_digest(img: &Image) -> String {
    let mut h = Sha256::new();
    h.update(img.width().to_le_bytes());
    h.update(img.height().to_le_bytes());
    h.update(img.as_raw());
    hex::encode(h.finalize())
}

/// Bresenham segment, endpoints included.
pub fn line_pixels(x0: i32, y0: i32, x1: i32, y1: i32) -> Vec<(i32, i32)> {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    let mut out = Vec::with_capacity((dx - dy + 1) as usize);
    loop {
        out.push((x, y));
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

/// Polyline stamped with a square brush of side `2 * half + 1`.
pub fn thick_polyline(points: &[(i32, i32)], half: i32) -> Mask {
    let mut px = Vec::new();
    for w in points.windows(2) {
        for (x, y) in line_pixels(w[0].0, w[0].1, w[1].0, w[1].1) {
            for dy in -half..=half {
                for dx in -half..=half {
                    px.push((x + dx, y + dy));
                }
            }
        }
    }
    Mask::from_pixels(px)
}

/// Pixels whose centre lies within `r` of (cx, cy).
pub fn disk(cx: i32, cy: i32, r: f64) -> Mask {
    let ri = r.ceil() as i32;
    let mut px = Vec::new();
    for dy in -ri..=ri {
        for dx in -ri..=ri {
            if f64::from(dx * dx + dy * dy) <= r * r {
                px.push((cx + dx, cy + dy));
            }
        }
    }
    Mask::from_pixels(px)
}

/// Pixels whose centre lies inside the polygon (even-odd rule).
pub fn fill_polygon(poly: &[(f64, f64)]) -> Mask {
    if poly.len() < 3 {
        return Mask::new();
    }
    let y_lo = poly.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor() as i32;
    let y_hi = poly.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil() as i32;
    let mut px = Vec::new();
    for y in y_lo..=y_hi {
        let cy = f64::from(y) + 0.5;
        let mut xs = Vec::new();
        for i in 0..poly.len() {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            if (a.1 <= cy) != (b.1 <= cy) {
                xs.push(a.0 + (cy - a.1) / (b.1 - a.1) * (b.0 - a.0));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks(2) {
            if let [l, r] = pair {
                let x0 = (l - 0.5).ceil() as i32;
                let x1 = (r - 0.5).floor() as i32;
                for x in x0..=x1 {
                    px.push((x, y));
                }
            }
        }
    }
    Mask::from_pixels(px)
}

pub fn paint_mask(img: &mut Image, mask: &Mask, c: Rgb) {
    for r in mask.runs() {
        for x in r.x0..=r.x1 {
            put(img, x, r.y, c);
        }
    }
}

pub fn blend_mask(img: &mut Image, mask: &Mask, c: Rgb, alpha: f64) {
    for r in mask.runs() {
        for x in r.x0..=r.x1 {
            blend(img, x, r.y, c, alpha);
        }
    }
}

/// Number of pixels that differ between two same-sized images, and their bbox.
pub fn diff(a: &Image, b: &Image) -> (usize, Option<BBox>) {
    assert_eq!(a.dimensions(), b.dimensions());
    let mut n = 0;
    let mut bb: Option<BBox> = None;
    for (x, y, p) in a.enumerate_pixels() {
        if p != b.get_pixel(x, y) {
            n += 1;
            let pt = BBox::point(x as i32, y as i32);
            bb = Some(bb.map_or(pt, |b| b.union(&pt)));
        }
    }
    (n, bb)
}

/// Pixels that differ between two same-sized images.
pub fn diff_mask(a: &Image, b: &Image) -> Mask {
    Mask::from_pixels(
        a.enumerate_pixels()
            .filter(|(x, y, p)| *p != b.get_pixel(*x, *y))
            .map(|(x, y, _)| (x as i32, y as i32)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bresenham_endpoints() {
        let px = line_pixels(0, 0, 5, 2);
        assert_eq!(px.first(), Some(&(0, 0)));
        assert_eq!(px.last(), Some(&(5, 2)));
        assert_eq!(px.len(), 6);
    }

    #[test]
    fn polygon_square_area() {
        let m = fill_polygon(&[(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)]);
        assert_eq!(m.area(), 100);
    }

    #[test]
    fn png_round_trip_keeps_digest() {
        let mut img = blank(7, 5, Rgb::WHITE);
        put(&mut img, 3, 2, Rgb([10, 20, 30]));
        let back = decode_png(&encode_png(&img)).unwrap();
        assert_eq!(pixel_digest(&img), pixel_digest(&back));
    }

    #[test]
    fn disk_is_symmetric() {
        let d = disk(10, 10, 5.0);
        let (cx, cy) = d.centroid().unwrap();
        assert!((cx - 10.0).abs() < 1e-9 && (cy - 10.0).abs() < 1e-9);
    }
}
