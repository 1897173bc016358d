//! Bundled `mono5x7` bitmap font.
//!
//! Uppercase Latin letters, digits, `%` and space. Every glyph spans all seven
//! rows and forms a single 8-connected component, so one detected ink
//! component is exactly one character at any integer scale.

use crate::model::BBox;

pub const FONT_ID: &str = "mono5x7";
pub const GLYPH_W: i32 = 5;
pub const GLYPH_H: i32 = 7;
/// Horizontal advance of a printable glyph, in font units.
pub const ADVANCE: i32 = 6;
/// Horizontal advance of a space, in font units.
pub const SPACE_ADVANCE: i32 = 3;
/// Empty font-unit columns between two glyph inks that imply a space.
pub const SPACE_GAP: i32 = 4;

const GLYPHS: &[(char, [&str; 7])] = &[
    ('A', [".###.", "#...#", "#...#", "#...#", "#####", "#...#", "#...#"]),
    ('B', ["####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."]),
    ('C', [".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."]),
    ('D', ["###..", "#..#.", "#...#", "#...#", "#...#", "#..#.", "###.."]),
    ('E', ["#####", "#....", "#....", "####.", "#....", "#....", "#####"]),
    ('F', ["#####", "#....", "#....", "####.", "#....", "#....", "#...."]),
    ('G', [".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"]),
    ('H', ["#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"]),
    ('I', [".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."]),
    ('J', ["..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."]),
    ('K', ["#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"]),
    ('L', ["#....", "#....", "#....", "#....", "#....", "#....", "#####"]),
    ('M', ["#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"]),
    ('N', ["#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"]),
    ('O', [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."]),
    ('P', ["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."]),
    ('Q', [".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"]),
    ('R', ["####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"]),
    ('S', [".####", "#....", "#....", ".###.", "....#", "....#", "####."]),
    ('T', ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."]),
    ('U', ["#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."]),
    ('V', ["#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."]),
    ('W', ["#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."]),
    ('X', ["#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"]),
    ('Y', ["#...#", "#...#", "#...#", ".#.#.", "..#..", "..#..", "..#.."]),
    ('Z', ["#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"]),
    ('0', [".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."]),
    ('1', ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."]),
    ('2', [".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"]),
    ('3', ["#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."]),
    ('4', ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."]),
    ('5', ["#####", "#....", "####.", "....#", "....#", "#...#", ".###."]),
    ('6', ["..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."]),
    ('7', ["#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."]),
    ('8', [".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."]),
    ('9', [".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."]),
    ('%', ["##...", "##..#", "..##.", "..#..", ".##..", "#..##", "...##"]),
];

fn rows_of(c: char) -> Option<&'static [&'static str; 7]> {
    GLYPHS.iter().find(|(g, _)| *g == c).map(|(_, rows)| rows)
}

pub fn supports(c: char) -> bool {
    c == ' ' || rows_of(c).is_some()
}

/// True when every character of `text` can be rendered.
pub fn supports_text(text: &str) -> bool {
    text.chars().all(supports)
}

/// Pixel offsets of ink for `text` drawn with its cell origin at (0, 0).
pub fn rasterize(text: &str, scale: i32) -> Vec<(i32, i32)> {
    let mut out = Vec::new();
    let mut pen = 0;
    for c in text.chars() {
        if c == ' ' {
            pen += SPACE_ADVANCE;
            continue;
        }
        let rows = rows_of(c).unwrap_or_else(|| panic!("character {c:?} is not in {FONT_ID}"));
        for (r, row) in rows.iter().enumerate() {
            for (col, b) in row.bytes().enumerate() {
                if b == b'#' {
                    let (fx, fy) = (pen + col as i32, r as i32);
                    for dy in 0..scale {
                        for dx in 0..scale {
                            out.push((fx * scale + dx, fy * scale + dy));
                        }
                    }
                }
            }
        }
        pen += ADVANCE;
    }
    out
}

/// Tight ink box of `text` drawn at cell origin (0, 0), or `None` for blank text.
pub fn ink_bbox(text: &str, scale: i32) -> Option<BBox> {
    let px = rasterize(text, scale);
    let (x0, x1) = px.iter().fold((i32::MAX, i32::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
    if px.is_empty() {
        return None;
    }
    Some(BBox::new(x0, x1, 0, GLYPH_H * scale - 1))
}

/// Width in pixels of the ink of `text`.
pub fn ink_width(text: &str, scale: i32) -> i32 {
    ink_bbox(text, scale).map_or(0, |b| b.x_max + 1)
}

/// Leading empty columns of the first glyph, in pixels.
pub fn ink_offset(text: &str, scale: i32) -> i32 {
    ink_bbox(text, scale).map_or(0, |b| b.x_min)
}

/// Cropped template: columns of the glyph that contain ink.
fn cropped(rows: &[&str; 7]) -> Vec<Vec<bool>> {
    let cols: Vec<usize> = (0..GLYPH_W as usize)
        .filter(|&c| rows.iter().any(|r| r.as_bytes()[c] == b'#'))
        .collect();
    rows.iter()
        .map(|r| cols.iter().map(|&c| r.as_bytes()[c] == b'#').collect())
        .collect()
}

/// Identifies one glyph from its ink box; `ink(x, y)` samples the image.
/// Returns U+FFFD when the pattern matches no template.
pub fn recognize_glyph(bbox: &BBox, ink: &dyn Fn(i32, i32) -> bool) -> char {
    let h = bbox.height();
    if h % GLYPH_H != 0 {
        return char::REPLACEMENT_CHARACTER;
    }
    let scale = h / GLYPH_H;
    if bbox.width() % scale != 0 {
        return char::REPLACEMENT_CHARACTER;
    }
    let cols = bbox.width() / scale;
    let pattern: Vec<Vec<bool>> = (0..GLYPH_H)
        .map(|r| {
            (0..cols)
                .map(|c| ink(bbox.x_min + c * scale + scale / 2, bbox.y_min + r * scale + scale / 2))
                .collect()
        })
        .collect();
    GLYPHS
        .iter()
        .find(|(_, rows)| cropped(rows) == pattern)
        .map_or(char::REPLACEMENT_CHARACTER, |(c, _)| *c)
}

/// Reads a line of glyph boxes (already in reading order), inserting spaces
/// where the gap between inks is wide enough.
pub fn recognize_line(glyphs: &[BBox], ink: &dyn Fn(i32, i32) -> bool) -> String {
    let mut s = String::new();
    for (i, g) in glyphs.iter().enumerate() {
        if i > 0 {
            let prev = &glyphs[i - 1];
            let scale = (g.height() / GLYPH_H).max(1);
            let empty = g.x_min - prev.x_max - 1;
            if empty >= SPACE_GAP * scale {
                s.push(' ');
            }
        }
        s.push(recognize_glyph(g, ink));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn components(rows: &[&str; 7]) -> usize {
        let mut ink: BTreeSet<(i32, i32)> = BTreeSet::new();
        for (y, r) in rows.iter().enumerate() {
            for (x, b) in r.bytes().enumerate() {
                if b == b'#' {
                    ink.insert((x as i32, y as i32));
                }
            }
        }
        let mut n = 0;
        while let Some(&start) = ink.iter().next() {
            n += 1;
            let mut stack = vec![start];
            ink.remove(&start);
            while let Some((x, y)) = stack.pop() {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if ink.remove(&(x + dx, y + dy)) {
                            stack.push((x + dx, y + dy));
                        }
                    }
                }
            }
        }
        n
    }

    #[test]
    fn glyphs_are_connected_full_height_and_distinct() {
        let mut seen = BTreeSet::new();
        for (c, rows) in GLYPHS {
            assert_eq!(components(rows), 1, "{c} is not one component");
            assert!(rows.iter().all(|r| r.contains('#')), "{c} does not span all rows");
            assert!(rows.iter().all(|r| r.len() == GLYPH_W as usize));
            assert!(seen.insert(cropped(rows)), "{c} duplicates another template");
        }
    }

    #[test]
    fn round_trip_through_pixels() {
        for scale in 1..=3 {
            let text = "ABC 120%";
            let px: BTreeSet<_> = rasterize(text, scale).into_iter().collect();
            let ink = |x: i32, y: i32| px.contains(&(x, y));
            let mut boxes = Vec::new();
            let mut pen = 0;
            for c in text.chars() {
                if c == ' ' {
                    pen += SPACE_ADVANCE;
                    continue;
                }
                let b = ink_bbox(&c.to_string(), scale).unwrap().translate(pen * scale, 0);
                boxes.push(b);
                pen += ADVANCE;
            }
            assert_eq!(recognize_line(&boxes, &ink), text);
        }
    }

    #[test]
    fn unknown_pattern_is_replacement() {
        let b = BBox::new(0, 4, 0, 6);
        assert_eq!(recognize_glyph(&b, &|_, _| true), char::REPLACEMENT_CHARACTER);
    }

    #[test]
    fn widths() {
        assert_eq!(ink_width("A", 1), 5);
        assert_eq!(ink_width("AB", 2), 22);
        assert_eq!(ink_offset("1", 2), 2);
        assert!(supports_text("GOLD 40%") && !supports_text("gold"));
    }
}
