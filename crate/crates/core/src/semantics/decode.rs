use super::calibrate::{axis_with_scale, parse_number, AxisCalibration};
use super::{DecodedPoint, SemanticRegion};
use crate::model::{Axis, ChartSpec, ChartType, Orientation, Rgb, Role, TickValue};
use crate::raster::{self, Image};
use crate::regiondetect::{interpolate_path, Detection};

const LEGEND_LABEL_REACH: i32 = 30;

/// Axes as drawn, named after the matching axis of the chart description.
pub fn detected_axes(det: &Detection, spec: &ChartSpec) -> Vec<Axis> {
    det.axes
        .iter()
        .map(|line| {
            let described = spec.axis(line.orientation);
            let name = described.map(|a| a.name.as_str()).unwrap_or("");
            axis_with_scale(line, &det.ticks, &det.text_elements, name, described.map(|a| a.scale))
        })
        .filter(|a| !a.ticks.is_empty())
        .collect()
}

fn calibration(axes: &[Axis], o: Orientation) -> Option<AxisCalibration> {
    axes.iter().find(|a| a.orientation == o && a.is_quantitative()).and_then(|a| AxisCalibration::from_axis(a).ok())
}

/// Difference of edge decodings: the far edge minus the pixel just past the
/// near edge.
fn span_value(cal: &AxisCalibration, top: i32, bottom: i32) -> Option<f64> {
    Some(cal.pixel_to_value(top).ok()? - cal.pixel_to_value(bottom + 1).ok()?)
}

fn column_extent(r: &SemanticRegion, x: i32) -> Option<(i32, i32)> {
    let ys: Vec<i32> = r.mask.pixels().filter(|p| p.0 == x).map(|p| p.1).collect();
    Some((*ys.iter().min()?, *ys.iter().max()?))
}

/// Vertical centre of the mark along its path at each category position.
fn path_points(img: &Image, r: &SemanticRegion, cats: &[(String, i32)], cal: &AxisCalibration) -> Vec<DecodedPoint> {
    let mut only = raster::blank(img.width(), img.height(), Rgb::WHITE);
    raster::paint_mask(&mut only, &r.mask, r.color);
    let xs: Vec<i32> = cats.iter().map(|c| c.1).collect();
    let Ok(ys) = interpolate_path(&only, r.color, &xs) else { return Vec::new() };
    cats.iter()
        .zip(ys)
        .filter_map(|((c, x), (_, y))| Some(DecodedPoint { category: c.clone(), x: *x, y, value: cal.value_at(y).ok()? }))
        .collect()
}

fn band_points(r: &SemanticRegion, cats: &[(String, i32)], cal: &AxisCalibration) -> Vec<DecodedPoint> {
    cats.iter()
        .filter_map(|(c, x)| {
            let (top, bottom) = column_extent(r, *x)?;
            Some(DecodedPoint { category: c.clone(), x: *x, y: f64::from(top), value: span_value(cal, top, bottom)? })
        })
        .collect()
}

fn legend_value(regions: &[SemanticRegion], color: Rgb) -> Option<f64> {
    let swatch = regions.iter().find(|s| s.role == Role::LegendSwatch && s.color == color)?;
    regions
        .iter()
        .filter(|t| t.is_text())
        .filter(|t| {
            let gap = t.bbox.x_min - swatch.bbox.x_max;
            (1..=LEGEND_LABEL_REACH).contains(&gap) && t.bbox.y_min <= swatch.bbox.y_max && t.bbox.y_max >= swatch.bbox.y_min
        })
        .min_by_key(|t| t.bbox.x_min)
        .and_then(|t| parse_number(t.text.as_deref()?))
}

/// Fills decoded values on data marks: edge differences for bars and
/// segments, path or band positions for line-based marks, centroids for
/// dots, area shares for pies and treemaps and the legend class for maps.
pub fn decode_values(img: &Image, spec: &ChartSpec, axes: &[Axis], regions: &mut [SemanticRegion]) {
    let vcal = calibration(axes, Orientation::Vertical);
    let hcal = calibration(axes, Orientation::Horizontal);
    let cats: Vec<(String, i32)> = axes
        .iter()
        .filter(|a| a.orientation == Orientation::Horizontal && !a.is_quantitative())
        .flat_map(|a| a.ticks.iter())
        .filter_map(|t| match &t.value {
            TickValue::Category(c) => Some((c.clone(), t.pixel)),
            TickValue::Number(_) => None,
        })
        .collect();
    let marks: Vec<usize> = (0..regions.len()).filter(|&i| regions[i].role == Role::DataMark).collect();
    match spec.chart_type {
        ChartType::Bar | ChartType::Histogram | ChartType::StackedBar | ChartType::StackedBar100 => {
            let Some(cal) = vcal else { return };
            for &i in &marks {
                let b = regions[i].bbox;
                regions[i].decoded_value = span_value(&cal, b.y_min, b.y_max);
            }
        }
        ChartType::Line => {
            let Some(cal) = vcal else { return };
            for &i in &marks {
                regions[i].points = path_points(img, &regions[i], &cats, &cal);
            }
        }
        ChartType::Area | ChartType::StackedArea => {
            let Some(cal) = vcal else { return };
            for &i in &marks {
                regions[i].points = band_points(&regions[i], &cats, &cal);
            }
        }
        ChartType::Scatterplot | ChartType::Bubble => {
            for &i in &marks {
                let Some((cx, cy)) = regions[i].mask.centroid() else { continue };
                regions[i].decoded_value = vcal.as_ref().and_then(|c| c.value_at(cy).ok());
                regions[i].decoded_x = hcal.as_ref().and_then(|c| c.value_at(cx).ok());
                if spec.chart_type == ChartType::Bubble {
                    regions[i].decoded_size = Some(regions[i].mask.area() as f64);
                }
            }
        }
        ChartType::Pie | ChartType::Treemap => {
            let area = |r: &SemanticRegion| if spec.chart_type == ChartType::Treemap { r.bbox.area() } else { r.mask.area() } as f64;
            let total: f64 = marks.iter().map(|&i| area(&regions[i])).sum();
            if total > 0.0 {
                for &i in &marks {
                    regions[i].decoded_value = Some(area(&regions[i]) / total * 100.0);
                }
            }
        }
        ChartType::Choropleth => {
            for &i in &marks {
                let v = legend_value(regions, regions[i].color);
                regions[i].decoded_value = v;
            }
        }
    }
}
