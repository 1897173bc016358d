//! Run-length encoded pixel sets.

use super::BBox;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// One horizontal run of pixels, `x0..=x1` on row `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Run {
    pub y: i32,
    pub x0: i32,
    pub x1: i32,
}

impl Run {
    pub fn len(&self) -> i64 {
        i64::from(self.x1 - self.x0 + 1)
    }
}

/// A set of pixels stored as sorted, non-overlapping, maximal row runs.
///
/// Serialized as a list of `[y, x_start, length]` triples.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize, JsonSchema)]
#[serde(into = "Vec<[i32; 3]>", try_from = "Vec<[i32; 3]>")]
pub struct Mask {
    #[schemars(with = "Vec<[i32; 3]>")]
    runs: Vec<Run>,
}

impl From<Mask> for Vec<[i32; 3]> {
    fn from(m: Mask) -> Self {
        m.runs.iter().map(|r| [r.y, r.x0, r.x1 - r.x0 + 1]).collect()
    }
}

impl TryFrom<Vec<[i32; 3]>> for Mask {
    type Error = String;

    fn try_from(triples: Vec<[i32; 3]>) -> Result<Self, Self::Error> {
        let mut runs = Vec::with_capacity(triples.len());
        for [y, x0, len] in triples {
            if len <= 0 {
                return Err(format!("run at row {y} has non-positive length {len}"));
            }
            runs.push(Run { y, x0, x1: x0 + len - 1 });
        }
        let mask = Mask::from_runs(runs);
        Ok(mask)
    }
}

impl Mask {
    pub fn new() -> Self {
        Mask::default()
    }

    /// Builds a mask from arbitrary (possibly overlapping, unsorted) runs.
    pub fn from_runs(mut runs: Vec<Run>) -> Self {
        runs.sort_by(|a, b| (a.y, a.x0).cmp(&(b.y, b.x0)));
        let mut merged: Vec<Run> = Vec::with_capacity(runs.len());
        for r in runs {
            match merged.last_mut() {
                Some(last) if last.y == r.y && r.x0 <= last.x1 + 1 => {
                    last.x1 = last.x1.max(r.x1);
                }
                _ => merged.push(r),
            }
        }
        Mask { runs: merged }
    }

    pub fn from_pixels<I: IntoIterator<Item = (i32, i32)>>(pixels: I) -> Self {
        Mask::from_runs(pixels.into_iter().map(|(x, y)| Run { y, x0: x, x1: x }).collect())
    }

    pub fn from_bbox(b: &BBox) -> Self {
        Mask {
            runs: (b.y_min..=b.y_max).map(|y| Run { y, x0: b.x_min, x1: b.x_max }).collect(),
        }
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn area(&self) -> i64 {
        self.runs.iter().map(Run::len).sum()
    }

    pub fn bbox(&self) -> Option<BBox> {
        let first = self.runs.first()?;
        let mut b = BBox::new(first.x0, first.x1, first.y, first.y);
        for r in &self.runs {
            b.x_min = b.x_min.min(r.x0);
            b.x_max = b.x_max.max(r.x1);
            b.y_max = b.y_max.max(r.y);
        }
        Some(b)
    }

    pub fn contains(&self, x: i32, y: i32) -> bool {
        self.runs
            .binary_search_by(|r| {
                if r.y != y {
                    r.y.cmp(&y)
                } else if r.x1 < x {
                    Ordering::Less
                } else if r.x0 > x {
                    Ordering::Greater
                } else {
                    Ordering::Equal
                }
            })
            .is_ok()
    }

    pub fn pixels(&self) -> impl Iterator<Item = (i32, i32)> + '_ {
        self.runs.iter().flat_map(|r| (r.x0..=r.x1).map(move |x| (x, r.y)))
    }

    pub fn centroid(&self) -> Option<(f64, f64)> {
        let area = self.area();
        if area == 0 {
            return None;
        }
        let (mut sx, mut sy) = (0.0, 0.0);
        for r in &self.runs {
            let n = r.len() as f64;
            sx += (f64::from(r.x0) + f64::from(r.x1)) / 2.0 * n;
            sy += f64::from(r.y) * n;
        }
        Some((sx / area as f64, sy / area as f64))
    }

    pub fn intersection_area(&self, other: &Mask) -> i64 {
        let (mut i, mut j) = (0, 0);
        let mut total = 0;
        while i < self.runs.len() && j < other.runs.len() {
            let a = self.runs[i];
            let b = other.runs[j];
            if a.y < b.y {
                i += 1;
            } else if b.y < a.y {
                j += 1;
            } else {
                let lo = a.x0.max(b.x0);
                let hi = a.x1.min(b.x1);
                if hi >= lo {
                    total += i64::from(hi - lo + 1);
                }
                if a.x1 < b.x1 {
                    i += 1;
                } else {
                    j += 1;
                }
            }
        }
        total
    }

    pub fn iou(&self, other: &Mask) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn union(&self, other: &Mask) -> Mask {
        let mut runs = self.runs.clone();
        runs.extend_from_slice(&other.runs);
        Mask::from_runs(runs)
    }

    /// Pixels of `self` that are not in `other`.
    pub fn difference(&self, other: &Mask) -> Mask {
        Mask::from_pixels(self.pixels().filter(|&(x, y)| !other.contains(x, y)))
    }

    /// Pixels of `self` inside `b`.
    pub fn clip(&self, b: &BBox) -> Mask {
        let runs = self
            .runs
            .iter()
            .filter(|r| r.y >= b.y_min && r.y <= b.y_max && r.x1 >= b.x_min && r.x0 <= b.x_max)
            .map(|r| Run { y: r.y, x0: r.x0.max(b.x_min), x1: r.x1.min(b.x_max) })
            .collect();
        Mask { runs }
    }

    pub fn translate(&self, dx: i32, dy: i32) -> Mask {
        Mask {
            runs: self.runs.iter().map(|r| Run { y: r.y + dy, x0: r.x0 + dx, x1: r.x1 + dx }).collect(),
        }
    }

    /// Mask pixels with at least one 4-neighbour outside the mask.
    pub fn boundary(&self) -> Mask {
        Mask::from_pixels(self.pixels().filter(|&(x, y)| {
            !(self.contains(x - 1, y) && self.contains(x + 1, y) && self.contains(x, y - 1) && self.contains(x, y + 1))
        }))
    }

    /// Pixels outside the mask that touch it (8-neighbourhood).
    pub fn outer_ring(&self) -> Mask {
        let mut out = Vec::new();
        for (x, y) in self.boundary().pixels() {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if !self.contains(nx, ny) {
                        out.push((nx, ny));
                    }
                }
            }
        }
        Mask::from_pixels(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn runs_merge_and_measure() {
        let m = Mask::from_pixels([(1, 0), (2, 0), (3, 0), (7, 0), (2, 1)]);
        assert_eq!(m.runs().len(), 3);
        assert_eq!(m.area(), 5);
        assert_eq!(m.bbox(), Some(BBox::new(1, 7, 0, 1)));
        assert!(m.contains(3, 0) && !m.contains(4, 0) && m.contains(2, 1));
    }

    #[test]
    fn boundary_of_square_is_its_outline() {
        let m = Mask::from_bbox(&BBox::new(0, 4, 0, 4));
        assert_eq!(m.boundary().area(), 16);
        assert_eq!(m.outer_ring().area(), 7 * 7 - 25);
    }

    #[test]
    fn rejects_empty_runs() {
        assert!(Mask::try_from(vec![[0, 0, 0]]).is_err());
    }

    fn pixel_set() -> impl Strategy<Value = BTreeSet<(i32, i32)>> {
        prop::collection::btree_set((0..12i32, 0..8i32), 0..60)
    }

    proptest! {
        #[test]
        fn set_algebra_matches_brute_force(a in pixel_set(), b in pixel_set()) {
            let ma = Mask::from_pixels(a.iter().copied());
            let mb = Mask::from_pixels(b.iter().copied());
            prop_assert_eq!(ma.area() as usize, a.len());
            prop_assert_eq!(ma.intersection_area(&mb) as usize, a.intersection(&b).count());
            prop_assert_eq!(ma.union(&mb).area() as usize, a.union(&b).count());
            prop_assert_eq!(ma.difference(&mb).area() as usize, a.difference(&b).count());
            let back: BTreeSet<_> = ma.pixels().collect();
            prop_assert_eq!(&back, &a);
            let encoded: Vec<[i32; 3]> = ma.clone().into();
            prop_assert_eq!(Mask::try_from(encoded).unwrap(), ma);
        }
    }
}
