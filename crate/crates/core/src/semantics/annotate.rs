use super::SemanticRegion;
use crate::font;
use crate::model::{BBox, Mask, Rgb};
use crate::raster::{self, Image};

pub const BADGE_FILL: Rgb = Rgb([32, 32, 160]);
pub const BADGE_TEXT: Rgb = Rgb::WHITE;
const BADGE_PAD: i32 = 2;
const BADGE_SCALE: i32 = 1;
const LEADER_STEP: i32 = 4;

/// Where one numbered badge was drawn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Badge {
    pub region_id: u32,
    pub rect: BBox,
    /// Anchor and badge-side endpoint, present when the badge was displaced.
    pub leader: Option<((i32, i32), (i32, i32))>,
}

impl Badge {
    /// Every pixel the badge may change.
    pub fn footprint(&self) -> Mask {
        let mut m = Mask::from_bbox(&self.rect);
        if let Some(((x0, y0), (x1, y1))) = self.leader {
            m = m.union(&Mask::from_pixels(raster::line_pixels(x0, y0, x1, y1)));
        }
        m
    }
}

fn badge_size(text: &str) -> (i32, i32) {
    (font::ink_width(text, BADGE_SCALE) - font::ink_offset(text, BADGE_SCALE) + 2 * BADGE_PAD, font::GLYPH_H * BADGE_SCALE + 2 * BADGE_PAD)
}

fn place(cx: i32, cy: i32, w: i32, h: i32, img_w: i32, img_h: i32) -> BBox {
    let x0 = (cx - w / 2).clamp(0, (img_w - w).max(0));
    let y0 = (cy - h / 2).clamp(0, (img_h - h).max(0));
    BBox::new(x0, x0 + w - 1, y0, y0 + h - 1)
}

fn overlaps(a: &BBox, b: &BBox) -> bool {
    a.intersection(b).is_some()
}

/// Lays out one badge per region at its mask centroid. A badge that would
/// overlap an earlier one is pushed down and right until free and joined to
/// its anchor by a leader line.
pub fn layout_badges(regions: &[SemanticRegion], width: u32, height: u32) -> Vec<Badge> {
    let (w, h) = (width as i32, height as i32);
    let mut out: Vec<Badge> = Vec::new();
    for r in regions {
        let Some((cx, cy)) = r.mask.centroid().or_else(|| Some(r.bbox.center())) else { continue };
        let (cx, cy) = (cx.round() as i32, cy.round() as i32);
        let (bw, bh) = badge_size(&r.id.to_string());
        let home = place(cx, cy, bw, bh, w, h);
        let mut rect = home;
        let mut k = 0;
        while out.iter().any(|b| overlaps(&b.rect, &rect)) && k < 400 {
            k += 1;
            rect = place(cx + k * LEADER_STEP, cy + k * LEADER_STEP, bw, bh, w, h);
            if rect == home {
                break;
            }
        }
        let leader = (rect != home).then(|| {
            let (bx, by) = rect.center();
            ((cx.clamp(0, w - 1), cy.clamp(0, h - 1)), (bx.round() as i32, by.round() as i32))
        });
        out.push(Badge { region_id: r.id, rect, leader });
    }
    out
}

/// Draws numbered badges for `regions`. Pixels outside badge rectangles and
/// leader lines are left untouched.
pub fn annotate_numbered(img: &Image, regions: &[SemanticRegion]) -> Image {
    annotate_with_badges(img, regions).0
}

pub fn annotate_with_badges(img: &Image, regions: &[SemanticRegion]) -> (Image, Vec<Badge>) {
    let mut out = img.clone();
    let badges = layout_badges(regions, img.width(), img.height());
    for b in &badges {
        if let Some(((x0, y0), (x1, y1))) = b.leader {
            for (x, y) in raster::line_pixels(x0, y0, x1, y1) {
                raster::put(&mut out, x, y, BADGE_FILL);
            }
        }
    }
    for b in &badges {
        raster::paint_mask(&mut out, &Mask::from_bbox(&b.rect), BADGE_FILL);
        let text = b.region_id.to_string();
        let origin = b.rect.x_min + BADGE_PAD - font::ink_offset(&text, BADGE_SCALE);
        for (x, y) in font::rasterize(&text, BADGE_SCALE) {
            raster::put(&mut out, x + origin, y + b.rect.y_min + BADGE_PAD, BADGE_TEXT);
        }
    }
    (out, badges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Role;

    fn region(id: u32, b: BBox) -> SemanticRegion {
        SemanticRegion::unlabeled(id, Mask::from_bbox(&b), Rgb([200, 0, 0]), crate::regiondetect::KindGuess::Mark, None)
    }

    #[test]
    fn empty_list_is_identity() {
        let img = raster::blank(40, 30, Rgb::WHITE);
        assert_eq!(annotate_numbered(&img, &[]), img);
    }

    #[test]
    fn same_centroid_gets_leader() {
        let img = raster::blank(200, 150, Rgb::WHITE);
        let regions = vec![region(1, BBox::new(50, 70, 50, 70)), region(2, BBox::new(50, 70, 50, 70))];
        let (out, badges) = annotate_with_badges(&img, &regions);
        assert!(badges[0].leader.is_none());
        assert!(badges[1].leader.is_some());
        assert!(!overlaps(&badges[0].rect, &badges[1].rect));
        let footprint = badges.iter().fold(Mask::new(), |m, b| m.union(&b.footprint()));
        assert!(raster::diff_mask(&img, &out).difference(&footprint).is_empty());
        assert_eq!(regions[0].role, Role::Other);
    }

    #[test]
    fn badges_stay_in_bounds() {
        let img = raster::blank(60, 40, Rgb::WHITE);
        let regions: Vec<_> = (1..=12).map(|i| region(i, BBox::new(55, 59, 35, 39))).collect();
        for b in layout_badges(&regions, 60, 40) {
            assert!(b.rect.within_image(60, 40));
        }
        let _ = annotate_numbered(&img, &regions);
    }
}
