use super::{Glyph, TextElement};
use crate::model::{BBox, Mask, Orientation};
use crate::raster::Image;

/// Luminance below this counts as ink.
pub const INK_THRESHOLD: f64 = 128.0;
pub const MIN_GLYPH_HEIGHT: i32 = 4;
pub const MAX_GLYPH_HEIGHT: i32 = 32;
pub const MIN_ASPECT: f64 = 0.1;
pub const MAX_ASPECT: f64 = 4.0;
const OVERLAP_FRACTION: f64 = 0.6;
const GAP_FACTOR: f64 = 1.5;

/// Row-major ink bitmap.
pub struct InkMap {
    pub w: i32,
    pub h: i32,
    bits: Vec<bool>,
}

impl InkMap {
    pub fn new(img: &Image, threshold: f64) -> Self {
        let (w, h) = (img.width() as i32, img.height() as i32);
        let bits = img
            .pixels()
            .map(|p| 0.299 * f64::from(p.0[0]) + 0.587 * f64::from(p.0[1]) + 0.114 * f64::from(p.0[2]) < threshold)
            .collect();
        InkMap { w, h, bits }
    }

    pub fn get(&self, x: i32, y: i32) -> bool {
        x >= 0 && y >= 0 && x < self.w && y < self.h && self.bits[(y * self.w + x) as usize]
    }

    /// 8-connected components as (bbox, pixel count, pixels).
    fn components(&self) -> Vec<(BBox, u32, Vec<(i32, i32)>)> {
        let mut seen = vec![false; self.bits.len()];
        let mut out = Vec::new();
        for start in 0..self.bits.len() {
            if !self.bits[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut px = Vec::new();
            while let Some(i) = stack.pop() {
                let (x, y) = (i as i32 % self.w, i as i32 / self.w);
                px.push((x, y));
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if self.get(nx, ny) {
                            let j = (ny * self.w + nx) as usize;
                            if !seen[j] {
                                seen[j] = true;
                                stack.push(j);
                            }
                        }
                    }
                }
            }
            let bbox = px.iter().fold(BBox::point(px[0].0, px[0].1), |b, &(x, y)| b.union(&BBox::point(x, y)));
            out.push((bbox, px.len() as u32, px));
        }
        out
    }
}

fn is_glyph_shape(b: &BBox) -> bool {
    let aspect = f64::from(b.width()) / f64::from(b.height());
    (MIN_GLYPH_HEIGHT..=MAX_GLYPH_HEIGHT).contains(&b.height()) && (MIN_ASPECT..=MAX_ASPECT).contains(&aspect)
}

/// Connected ink components shaped like characters, sorted by (y_min, x_min).
pub fn detect_glyphs(img: &Image) -> Vec<Glyph> {
    detect_glyphs_with(&InkMap::new(img, INK_THRESHOLD))
}

pub fn detect_glyphs_with(ink: &InkMap) -> Vec<Glyph> {
    let mut glyphs: Vec<Glyph> = ink
        .components()
        .into_iter()
        .filter(|(b, _, _)| is_glyph_shape(b))
        .map(|(bbox, n, _)| Glyph { bbox, ink_pixel_count: n })
        .collect();
    glyphs.sort_by_key(|g| (g.bbox.y_min, g.bbox.x_min, g.bbox.x_max, g.bbox.y_max));
    glyphs
}

/// Ink pixels of every glyph of the given elements.
pub fn text_mask(ink: &InkMap, elements: &[TextElement]) -> Mask {
    let mut px = Vec::new();
    for e in elements {
        for g in &e.glyphs {
            for y in g.bbox.y_min..=g.bbox.y_max {
                for x in g.bbox.x_min..=g.bbox.x_max {
                    if ink.get(x, y) {
                        px.push((x, y));
                    }
                }
            }
        }
    }
    Mask::from_pixels(px)
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn overlap(a0: i32, a1: i32, b0: i32, b1: i32) -> i32 {
    (a1.min(b1) - a0.max(b0) + 1).max(0)
}

/// Grouping rule between two glyph boxes. Extents are `max - min`, gaps are
/// measured from the nearer box's max to the farther box's min.
pub fn linked(a: &BBox, b: &BBox, median_w: f64, median_h: f64) -> Option<Orientation> {
    let v_overlap = f64::from(overlap(a.y_min, a.y_max, b.y_min, b.y_max));
    let (left, right) = if a.x_min <= b.x_min { (a, b) } else { (b, a) };
    let x_gap = f64::from(right.x_min - left.x_max);
    if v_overlap >= OVERLAP_FRACTION * f64::from(a.height().min(b.height())) && x_gap <= GAP_FACTOR * median_w {
        return Some(Orientation::Horizontal);
    }
    let h_overlap = f64::from(overlap(a.x_min, a.x_max, b.x_min, b.x_max));
    let (upper, lower) = if a.y_min <= b.y_min { (a, b) } else { (b, a) };
    let y_gap = f64::from(lower.y_min - upper.y_max);
    if h_overlap >= OVERLAP_FRACTION * f64::from(a.width().min(b.width())) && y_gap <= GAP_FACTOR * median_h {
        return Some(Orientation::Vertical);
    }
    None
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage clustering of glyphs into text elements.
pub fn group_glyphs(glyphs: &[Glyph]) -> Vec<TextElement> {
    let mut sorted: Vec<Glyph> = glyphs.to_vec();
    sorted.sort_by_key(|g| (g.bbox.y_min, g.bbox.x_min, g.bbox.x_max, g.bbox.y_max, g.ink_pixel_count));
    let mw = median(sorted.iter().map(|g| f64::from(g.bbox.x_max - g.bbox.x_min)).collect());
    let mh = median(sorted.iter().map(|g| f64::from(g.bbox.y_max - g.bbox.y_min)).collect());
    let n = sorted.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut vertical = vec![false; n];
    for i in 0..n {
        for j in i + 1..n {
            if let Some(o) = linked(&sorted[i].bbox, &sorted[j].bbox, mw, mh) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[b] = a;
                    vertical[a] |= vertical[b];
                }
                if o == Orientation::Vertical {
                    vertical[a] = true;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<Glyph>> = std::collections::BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(sorted[i].clone());
    }
    let mut elements: Vec<TextElement> = groups
        .into_iter()
        .map(|(root, mut gs)| {
            let all_one_row = gs.windows(2).all(|w| overlap(w[0].bbox.y_min, w[0].bbox.y_max, w[1].bbox.y_min, w[1].bbox.y_max) > 0);
            let orientation = if vertical[root] && !all_one_row { Orientation::Vertical } else { Orientation::Horizontal };
            match orientation {
                Orientation::Horizontal => gs.sort_by_key(|g| (g.bbox.x_min, g.bbox.y_min)),
                Orientation::Vertical => gs.sort_by_key(|g| (g.bbox.y_min, g.bbox.x_min)),
            }
            let bbox = gs.iter().skip(1).fold(gs[0].bbox, |b, g| b.union(&g.bbox));
            TextElement { id: 0, bbox, glyphs: gs, orientation, text: None }
        })
        .collect();
    elements.sort_by_key(|e| e.bbox.reading_key());
    for (i, e) in elements.iter_mut().enumerate() {
        e.id = i as u32 + 1;
    }
    elements
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Rgb;
    use crate::raster;

    fn g(x0: i32, x1: i32, y0: i32, y1: i32) -> Glyph {
        Glyph { bbox: BBox::new(x0, x1, y0, y1), ink_pixel_count: 1 }
    }

    #[test]
    fn blank_image_has_no_glyphs() {
        assert!(detect_glyphs(&raster::blank(40, 30, Rgb::WHITE)).is_empty());
    }

    #[test]
    fn single_glyph_box() {
        let mut img = raster::blank(40, 30, Rgb::WHITE);
        for (x, y) in crate::font::rasterize("A", 1) {
            raster::put(&mut img, x + 10, y + 10, Rgb::BLACK);
        }
        let gs = detect_glyphs(&img);
        assert_eq!(gs.len(), 1);
        assert_eq!(gs[0].bbox, BBox::new(10, 14, 10, 16));
    }

    #[test]
    fn three_glyph_word() {
        let els = group_glyphs(&[g(10, 18, 5, 15), g(20, 28, 5, 15), g(32, 40, 5, 15)]);
        assert_eq!(els.len(), 1);
        assert_eq!(els[0].bbox, BBox::new(10, 40, 5, 15));
    }

    #[test]
    fn far_glyphs_split() {
        assert_eq!(group_glyphs(&[g(10, 18, 5, 15), g(118, 126, 5, 15)]).len(), 2);
    }
}
