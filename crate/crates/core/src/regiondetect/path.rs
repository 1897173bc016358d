use super::DetectError;
use crate::model::Rgb;
use crate::raster::{self, Image};

/// Vertical centre of `series_color` pixels at each requested column. Empty
/// columns are linearly interpolated between the nearest hit columns and
/// clamped beyond the outermost ones.
pub fn interpolate_path(img: &Image, series_color: Rgb, x_pixels: &[i32]) -> Result<Vec<(i32, f64)>, DetectError> {
    let (w, h) = (img.width() as i32, img.height() as i32);
    let mut hits: Vec<(i32, f64)> = Vec::new();
    for x in 0..w {
        let (mut sum, mut n) = (0i64, 0i64);
        for y in 0..h {
            if raster::rgb_at(img, x, y) == series_color {
                sum += i64::from(y);
                n += 1;
            }
        }
        if n > 0 {
            hits.push((x, sum as f64 / n as f64));
        }
    }
    if hits.len() < 2 {
        return Err(DetectError::PathNotFound);
    }
    Ok(x_pixels
        .iter()
        .map(|&x| {
            let i = hits.partition_point(|&(hx, _)| hx < x);
            let y = if i < hits.len() && hits[i].0 == x {
                hits[i].1
            } else if i == 0 {
                hits[0].1
            } else if i == hits.len() {
                hits[i - 1].1
            } else {
                let ((xa, ya), (xb, yb)) = (hits[i - 1], hits[i]);
                ya + (yb - ya) * f64::from(x - xa) / f64::from(xb - xa)
            };
            (x, y)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mask;

    const RED: Rgb = Rgb([220, 40, 40]);

    #[test]
    fn midpoint_of_a_straight_segment() {
        let mut img = raster::blank(300, 400, Rgb::WHITE);
        raster::paint_mask(&mut img, &raster::thick_polyline(&[(100, 300), (200, 100)], 1), RED);
        let out = interpolate_path(&img, RED, &[150, 100, 200]).unwrap();
        assert!((out[0].1 - 200.0).abs() <= 1.0, "{out:?}");
        // End columns also hold the stroke's neighbours along a steep slope.
        assert!((out[1].1 - 300.0).abs() <= 2.0);
        assert!((out[2].1 - 100.0).abs() <= 2.0);
    }

    #[test]
    fn gaps_are_interpolated() {
        let mut img = raster::blank(100, 100, Rgb::WHITE);
        raster::paint_mask(&mut img, &Mask::from_pixels([(10, 20), (30, 60)]), RED);
        let out = interpolate_path(&img, RED, &[20, 5, 90]).unwrap();
        assert_eq!(out, vec![(20, 40.0), (5, 20.0), (90, 60.0)]);
    }

    #[test]
    fn absent_colour_is_an_error() {
        let img = raster::blank(50, 50, Rgb::WHITE);
        assert_eq!(interpolate_path(&img, RED, &[10]).unwrap_err(), DetectError::PathNotFound);
    }
}
