use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

/// Axis-aligned pixel box with inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct BBox {
    pub x_min: i32,
    pub x_max: i32,
    pub y_min: i32,
    pub y_max: i32,
}

impl BBox {
    /// Panics if the bounds are inverted.
    pub fn new(x_min: i32, x_max: i32, y_min: i32, y_max: i32) -> Self {
        assert!(x_min <= x_max && y_min <= y_max, "inverted bbox ({x_min},{x_max},{y_min},{y_max})");
        BBox { x_min, x_max, y_min, y_max }
    }

    pub fn point(x: i32, y: i32) -> Self {
        BBox { x_min: x, x_max: x, y_min: y, y_max: y }
    }

    pub fn is_well_formed(&self) -> bool {
        self.x_min <= self.x_max && self.y_min <= self.y_max
    }

    /// Pixel columns covered.
    pub fn width(&self) -> i32 {
        self.x_max - self.x_min + 1
    }

    /// Pixel rows covered.
    pub fn height(&self) -> i32 {
        self.y_max - self.y_min + 1
    }

    pub fn area(&self) -> i64 {
        i64::from(self.width()) * i64::from(self.height())
    }

    pub fn center(&self) -> (f64, f64) {
        (
            f64::from(self.x_min + self.x_max) / 2.0,
            f64::from(self.y_min + self.y_max) / 2.0,
        )
    }

    pub fn contains(&self, x: i32, y: i32) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn contains_box(&self, other: &BBox) -> bool {
        self.contains(other.x_min, other.y_min) && self.contains(other.x_max, other.y_max)
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x_min: self.x_min.min(other.x_min),
            x_max: self.x_max.max(other.x_max),
            y_min: self.y_min.min(other.y_min),
            y_max: self.y_max.max(other.y_max),
        }
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let b = BBox {
            x_min: self.x_min.max(other.x_min),
            x_max: self.x_max.min(other.x_max),
            y_min: self.y_min.max(other.y_min),
            y_max: self.y_max.min(other.y_max),
        };
        b.is_well_formed().then_some(b)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection(other).map_or(0, |b| b.area());
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn within_image(&self, width: u32, height: u32) -> bool {
        self.x_min >= 0 && self.y_min >= 0 && (self.x_max as i64) < width as i64 && (self.y_max as i64) < height as i64
    }

    pub fn translate(&self, dx: i32, dy: i32) -> BBox {
        BBox {
            x_min: self.x_min + dx,
            x_max: self.x_max + dx,
            y_min: self.y_min + dy,
            y_max: self.y_max + dy,
        }
    }

    /// Sort key used for every region and element list.
    pub fn reading_key(&self) -> (i32, i32, i32) {
        (self.y_min, self.x_min, self.x_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry() {
        let a = BBox::new(0, 9, 0, 9);
        let b = BBox::new(5, 14, 0, 9);
        assert_eq!(a.area(), 100);
        assert_eq!(a.intersection(&b), Some(BBox::new(5, 9, 0, 9)));
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
        assert_eq!(a.union(&b), BBox::new(0, 14, 0, 9));
        assert!(BBox::new(0, 0, 0, 0).intersection(&BBox::new(2, 3, 2, 3)).is_none());
        assert!(a.within_image(10, 10));
        assert!(!a.within_image(9, 10));
    }

    #[test]
    #[should_panic]
    fn inverted_box_panics() {
        let _ = BBox::new(3, 2, 0, 0);
    }
}
