use super::glyphs::{text_mask, InkMap, INK_THRESHOLD};
use super::{KindGuess, RawRegion, TextElement};
use crate::model::{BBox, Mask, Rgb, ShapeClass};
use crate::raster::Image;
use std::collections::{BTreeMap, VecDeque};

/// Quantization step per channel (256 / 32 levels).
pub const QUANT_SHIFT: u8 = 3;
/// Sobel magnitude (normalized by 4) above which a pixel is an edge.
pub const EDGE_THRESHOLD: f64 = 64.0;
pub const MIN_REGION_AREA: i64 = 16;
const SWATCH_MAX_SIDE: i32 = 24;
const SWATCH_LABEL_REACH: i32 = 30;
const LONG_FRACTION: f64 = 0.3;

pub fn quantize(c: Rgb) -> u16 {
    let [r, g, b] = c.0;
    (u16::from(r >> QUANT_SHIFT) << 10) | (u16::from(g >> QUANT_SHIFT) << 5) | u16::from(b >> QUANT_SHIFT)
}

struct Grid {
    w: i32,
    h: i32,
    q: Vec<u16>,
    lum: Vec<f64>,
    rgb: Vec<Rgb>,
}

impl Grid {
    fn new(img: &Image) -> Self {
        let (w, h) = (img.width() as i32, img.height() as i32);
        let rgb: Vec<Rgb> = img.pixels().map(|p| Rgb([p.0[0], p.0[1], p.0[2]])).collect();
        Grid { w, h, q: rgb.iter().map(|&c| quantize(c)).collect(), lum: rgb.iter().map(|c| c.luminance()).collect(), rgb }
    }

    fn idx(&self, x: i32, y: i32) -> Option<usize> {
        (x >= 0 && y >= 0 && x < self.w && y < self.h).then(|| (y * self.w + x) as usize)
    }
}

const N4: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

fn flood(grid: &Grid, allowed: &dyn Fn(usize) -> bool, same: &dyn Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let mut seen = vec![false; grid.q.len()];
    let mut comps = Vec::new();
    for start in 0..grid.q.len() {
        if seen[start] || !allowed(start) {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut k = 0;
        while k < comp.len() {
            let i = comp[k];
            k += 1;
            let (x, y) = (i as i32 % grid.w, i as i32 / grid.w);
            for (dx, dy) in N4 {
                if let Some(j) = grid.idx(x + dx, y + dy) {
                    if !seen[j] && allowed(j) && same(i, j) {
                        seen[j] = true;
                        comp.push(j);
                    }
                }
            }
        }
        comps.push(comp);
    }
    comps
}

/// Splits one flat-colour component along internal luminance edges. Outside
/// pixels are replaced by the centre pixel so the component border never
/// counts as an edge.
fn split_on_edges(grid: &Grid, comp: Vec<usize>) -> Vec<Vec<usize>> {
    let members: std::collections::HashSet<usize> = comp.iter().copied().collect();
    let mut edge = std::collections::HashSet::new();
    for &i in &comp {
        let (x, y) = (i as i32 % grid.w, i as i32 / grid.w);
        let c = grid.lum[i];
        let l = |dx: i32, dy: i32| grid.idx(x + dx, y + dy).filter(|j| members.contains(j)).map_or(c, |j| grid.lum[j]);
        let gx = (l(1, -1) + 2.0 * l(1, 0) + l(1, 1)) - (l(-1, -1) + 2.0 * l(-1, 0) + l(-1, 1));
        let gy = (l(-1, 1) + 2.0 * l(0, 1) + l(1, 1)) - (l(-1, -1) + 2.0 * l(0, -1) + l(1, -1));
        if (gx * gx + gy * gy).sqrt() / 4.0 > EDGE_THRESHOLD {
            edge.insert(i);
        }
    }
    if edge.is_empty() || edge.len() == comp.len() {
        return vec![comp];
    }
    let inside = |i: usize| members.contains(&i) && !edge.contains(&i);
    let parts = flood(grid, &inside, &|_, _| true);
    let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for (p, part) in parts.iter().enumerate() {
        for &i in part {
            owner.insert(i, p);
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i as i32 % grid.w, i as i32 / grid.w);
        let p = owner[&i];
        for (dx, dy) in N4 {
            if let Some(j) = grid.idx(x + dx, y + dy) {
                if edge.contains(&j) && !owner.contains_key(&j) {
                    owner.insert(j, p);
                    queue.push_back(j);
                }
            }
        }
    }
    let mut out = vec![Vec::new(); parts.len()];
    for (i, p) in owner {
        out[p].push(i);
    }
    out
}

fn dominant(grid: &Grid, px: &[usize]) -> Rgb {
    let mut counts: BTreeMap<Rgb, usize> = BTreeMap::new();
    for &i in px {
        *counts.entry(grid.rgb[i]).or_default() += 1;
    }
    counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(c, _)| c).unwrap_or(Rgb::WHITE)
}

fn to_mask(grid: &Grid, px: &[usize]) -> Mask {
    Mask::from_pixels(px.iter().map(|&i| (i as i32 % grid.w, i as i32 / grid.w)))
}

fn guess_kind(grid: &Grid, bbox: &BBox, area: i64, color: Rgb, text: &[TextElement]) -> KindGuess {
    let long_w = f64::from(bbox.width()) >= LONG_FRACTION * f64::from(grid.w);
    let long_h = f64::from(bbox.height()) >= LONG_FRACTION * f64::from(grid.h);
    if color.luminance() < INK_THRESHOLD {
        return if long_w || long_h {
            KindGuess::AxisLine
        } else if bbox.width() <= 2 || bbox.height() <= 2 {
            KindGuess::Tick
        } else {
            KindGuess::Unknown
        };
    }
    let square = (bbox.width() - bbox.height()).abs() <= 2 && bbox.width() <= SWATCH_MAX_SIDE && area == bbox.area();
    if square {
        let labelled = text.iter().any(|t| {
            let dx = t.bbox.x_min - bbox.x_max;
            let v = t.bbox.y_max.min(bbox.y_max) - t.bbox.y_min.max(bbox.y_min) + 1;
            dx > 0 && dx <= SWATCH_LABEL_REACH && f64::from(v) >= 0.5 * f64::from(bbox.height())
        });
        if labelled {
            return KindGuess::LegendSwatch;
        }
    }
    KindGuess::Mark
}

/// Colour segmentation of non-background, non-text pixels.
pub fn segment_marks(img: &Image, text: &[TextElement], shape: ShapeClass) -> Vec<RawRegion> {
    let grid = Grid::new(img);
    let ink = InkMap::new(img, INK_THRESHOLD);
    let tmask = text_mask(&ink, text);
    let mut is_text = vec![false; grid.q.len()];
    for (x, y) in tmask.pixels() {
        if let Some(i) = grid.idx(x, y) {
            is_text[i] = true;
        }
    }
    let mut hist = vec![0usize; 1 << 15];
    for &q in &grid.q {
        hist[q as usize] += 1;
    }
    let background = (0..hist.len()).max_by_key(|&q| (hist[q], std::cmp::Reverse(q))).unwrap_or(0) as u16;

    let allowed = |i: usize| grid.q[i] != background && !is_text[i];
    let comps = flood(&grid, &allowed, &|i, j| grid.q[i] == grid.q[j]);

    // Counters of glyphs drawn inside a mark (e.g. the hole of an O) belong
    // to the enclosing region of the same colour.
    let boxes: Vec<BBox> = comps.iter().map(|c| to_mask(&grid, c).bbox().expect("non-empty")).collect();
    let inside_text = |b: &BBox| text.iter().any(|t| t.bbox.contains_box(b));
    let mut holes: Vec<Vec<usize>> = vec![Vec::new(); comps.len()];
    let mut keep = vec![true; comps.len()];
    for (i, b) in boxes.iter().enumerate() {
        if !inside_text(b) {
            continue;
        }
        let q = grid.q[comps[i][0]];
        let host = (0..comps.len())
            .filter(|&j| j != i && grid.q[comps[j][0]] == q && !inside_text(&boxes[j]) && boxes[j].contains_box(b))
            .max_by_key(|&j| (comps[j].len(), std::cmp::Reverse(j)));
        keep[i] = false;
        if let Some(j) = host {
            holes[j].push(i);
        }
    }
    let comps: Vec<Vec<usize>> = (0..comps.len())
        .filter(|&j| keep[j])
        .map(|j| {
            let mut c = comps[j].clone();
            for &i in &holes[j] {
                c.extend_from_slice(&comps[i]);
            }
            c
        })
        .collect();

    let mut raw: Vec<(Mask, Rgb, KindGuess, u16)> = Vec::new();
    for comp in comps {
        for part in split_on_edges(&grid, comp) {
            if (part.len() as i64) < MIN_REGION_AREA {
                continue;
            }
            let mask = to_mask(&grid, &part);
            let bbox = mask.bbox().expect("non-empty part");
            let color = dominant(&grid, &part);
            let kind = guess_kind(&grid, &bbox, mask.area(), color, text);
            raw.push((mask, color, kind, grid.q[part[0]]));
        }
    }

    if shape == ShapeClass::LineBased {
        let mut merged: BTreeMap<u16, (Mask, Rgb)> = BTreeMap::new();
        let mut rest = Vec::new();
        for (mask, color, kind, q) in raw {
            if kind == KindGuess::Mark {
                let e = merged.entry(q).or_insert_with(|| (Mask::new(), color));
                e.0 = e.0.union(&mask);
            } else {
                rest.push((mask, color, kind, q));
            }
        }
        rest.extend(merged.into_iter().map(|(q, (m, c))| (m, c, KindGuess::Mark, q)));
        raw = rest;
    }

    let mut regions: Vec<RawRegion> = raw
        .into_iter()
        .map(|(mask, dominant_color, kind_guess, _)| RawRegion {
            id: 0,
            bbox: mask.bbox().expect("non-empty"),
            mask,
            dominant_color,
            kind_guess,
        })
        .collect();
    regions.sort_by_key(|r| r.bbox.reading_key());
    for (i, r) in regions.iter_mut().enumerate() {
        r.id = i as u32 + 1;
    }
    regions
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster;

    #[test]
    fn white_image_has_no_regions() {
        assert!(segment_marks(&raster::blank(50, 40, Rgb::WHITE), &[], ShapeClass::Rectangular).is_empty());
    }

    #[test]
    fn tiny_specks_are_dropped() {
        let mut img = raster::blank(50, 40, Rgb::WHITE);
        raster::paint_mask(&mut img, &Mask::from_bbox(&BBox::new(2, 4, 2, 4)), Rgb([200, 0, 0]));
        raster::paint_mask(&mut img, &Mask::from_bbox(&BBox::new(10, 19, 10, 29)), Rgb([0, 200, 0]));
        let r = segment_marks(&img, &[], ShapeClass::Rectangular);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].mask.area(), 200);
    }

    #[test]
    fn component_with_internal_edge_is_split() {
        let mut img = raster::blank(60, 40, Rgb::WHITE);
        raster::paint_mask(&mut img, &Mask::from_bbox(&BBox::new(10, 29, 10, 29)), Rgb([250, 250, 250]));
        raster::paint_mask(&mut img, &Mask::from_bbox(&BBox::new(30, 49, 10, 29)), Rgb([20, 20, 20]));
        let grid = Grid::new(&img);
        let comp: Vec<usize> = (10..=29).flat_map(|y| (10..=49).map(move |x| (y * 60 + x) as usize)).collect();
        let parts = split_on_edges(&grid, comp);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts.iter().map(Vec::len).sum::<usize>(), 800);
    }
}
