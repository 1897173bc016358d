use super::glyphs::{text_mask, InkMap, INK_THRESHOLD};
use super::{AxisLine, AxisSide, DetectError, TextElement, TickMark};
use crate::model::{Orientation, Span};
use crate::raster::Image;

const LONG_FRACTION: f64 = 0.3;
const TICK_MIN: i32 = 3;
const TICK_MAX: i32 = 12;
/// Maximum distance from a tick to the centre of its label.
pub const LABEL_RADIUS: f64 = 40.0;

struct Dark {
    ink: InkMap,
    text: Vec<bool>,
}

impl Dark {
    fn at(&self, x: i32, y: i32) -> bool {
        self.ink.get(x, y) && !self.text[(y * self.ink.w + x) as usize]
    }
}

fn longest_run(len: i32, dark: impl Fn(i32) -> bool) -> (i32, i32) {
    let (mut best, mut start) = ((0, -1), None);
    for i in 0..=len {
        match (i < len && dark(i), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s > best.1 - best.0 + 1 {
                    best = (s, i - 1);
                }
                start = None;
            }
            _ => {}
        }
    }
    best
}

/// Length of a dark run starting at (x, y) stepping by (dx, dy).
fn run_len(d: &Dark, x: i32, y: i32, dx: i32, dy: i32) -> i32 {
    let mut n = 0;
    while d.at(x + dx * n, y + dy * n) {
        n += 1;
    }
    n
}

/// Thin stroke: neighbours on both sides of the run are not dark.
fn thin(d: &Dark, x: i32, y: i32, dx: i32, dy: i32, n: i32) -> bool {
    (0..n).all(|k| {
        let (px, py) = (x + dx * k, y + dy * k);
        !d.at(px + dy, py + dx) && !d.at(px - dy, py - dx)
    })
}

fn nearest_label(text: &[TextElement], cx: f64, cy: f64) -> Option<u32> {
    text.iter()
        .map(|t| {
            let (tx, ty) = t.bbox.center();
            (((tx - cx).powi(2) + (ty - cy).powi(2)).sqrt(), t.id)
        })
        .filter(|(d, _)| *d <= LABEL_RADIUS)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
}

/// Finds the longest dark horizontal and vertical lines and the tick strokes
/// touching them.
pub fn detect_axes_ticks(img: &Image, text: &[TextElement]) -> Result<(Vec<AxisLine>, Vec<TickMark>), DetectError> {
    let ink = InkMap::new(img, INK_THRESHOLD);
    let (w, h) = (ink.w, ink.h);
    let mut is_text = vec![false; (w * h) as usize];
    for (x, y) in text_mask(&ink, text).pixels() {
        is_text[(y * w + x) as usize] = true;
    }
    let d = Dark { ink, text: is_text };

    let mut best_h: Option<(i32, i32, i32)> = None;
    for y in 0..h {
        let (a, b) = longest_run(w, |x| d.at(x, y));
        if b >= a && best_h.is_none_or(|(_, s, e)| b - a > e - s) {
            best_h = Some((y, a, b));
        }
    }
    let mut best_v: Option<(i32, i32, i32)> = None;
    for x in 0..w {
        let (a, b) = longest_run(h, |y| d.at(x, y));
        if b >= a && best_v.is_none_or(|(_, s, e)| b - a > e - s) {
            best_v = Some((x, a, b));
        }
    }
    let best_h = best_h.filter(|(_, a, b)| f64::from(b - a + 1) >= LONG_FRACTION * f64::from(w));
    let best_v = best_v.filter(|(_, a, b)| f64::from(b - a + 1) >= LONG_FRACTION * f64::from(h));
    if best_h.is_none() && best_v.is_none() {
        return Err(DetectError::AxisNotFound);
    }

    let mut axes = Vec::new();
    let mut ticks = Vec::new();
    if let Some((x, y0, y1)) = best_v {
        axes.push(AxisLine { orientation: Orientation::Vertical, position: x, span: Span { min: y0, max: y1 } });
        for y in y0..=y1 {
            for (side, dir) in [(AxisSide::Left, -1), (AxisSide::Right, 1)] {
                let n = run_len(&d, x + dir, y, dir, 0);
                if (TICK_MIN..=TICK_MAX).contains(&n) && thin(&d, x + dir, y, dir, 0, n) {
                    let cx = f64::from(x) + f64::from(dir) * f64::from(n + 1) / 2.0;
                    ticks.push(TickMark { axis_side: side, pixel: y, label: nearest_label(text, cx, f64::from(y)) });
                }
            }
        }
    }
    if let Some((y, x0, x1)) = best_h {
        let start = match best_v {
            Some((vx, _, _)) if vx > x0 && vx <= x1 => vx,
            _ => x0,
        };
        axes.push(AxisLine { orientation: Orientation::Horizontal, position: y, span: Span { min: start, max: x1 } });
        for x in start..=x1 {
            for (side, dir) in [(AxisSide::Bottom, 1), (AxisSide::Top, -1)] {
                let n = run_len(&d, x, y + dir, 0, dir);
                if (TICK_MIN..=TICK_MAX).contains(&n) && thin(&d, x, y + dir, 0, dir, n) {
                    let cy = f64::from(y) + f64::from(dir) * f64::from(n + 1) / 2.0;
                    ticks.push(TickMark { axis_side: side, pixel: x, label: nearest_label(text, f64::from(x), cy) });
                }
            }
        }
    }
    ticks.sort_by_key(|t| (t.axis_side, t.pixel));
    Ok((axes, ticks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BBox, Mask, Rgb};
    use crate::raster;

    #[test]
    fn blank_has_no_axes() {
        let img = raster::blank(100, 80, Rgb::WHITE);
        assert_eq!(detect_axes_ticks(&img, &[]).unwrap_err(), DetectError::AxisNotFound);
    }

    #[test]
    fn l_shaped_axes_with_ticks() {
        let mut img = raster::blank(200, 150, Rgb::WHITE);
        raster::paint_mask(&mut img, &Mask::from_bbox(&BBox::new(30, 30, 10, 120)), Rgb::BLACK);
        raster::paint_mask(&mut img, &Mask::from_bbox(&BBox::new(31, 190, 120, 120)), Rgb::BLACK);
        for y in [20, 70, 120] {
            raster::paint_mask(&mut img, &Mask::from_bbox(&BBox::new(25, 29, y, y)), Rgb::BLACK);
        }
        raster::paint_mask(&mut img, &Mask::from_bbox(&BBox::new(100, 100, 121, 125)), Rgb::BLACK);
        let (axes, ticks) = detect_axes_ticks(&img, &[]).unwrap();
        assert_eq!(axes.len(), 2);
        let left: Vec<i32> = ticks.iter().filter(|t| t.axis_side == AxisSide::Left).map(|t| t.pixel).collect();
        assert_eq!(left, vec![20, 70, 120]);
        let bottom: Vec<i32> = ticks.iter().filter(|t| t.axis_side == AxisSide::Bottom).map(|t| t.pixel).collect();
        assert_eq!(bottom, vec![100]);
        assert!(ticks.iter().all(|t| t.label.is_none()));
        let horiz = axes.iter().find(|a| a.orientation == Orientation::Horizontal).unwrap();
        assert_eq!(horiz.span, Span { min: 30, max: 190 });
    }
}
