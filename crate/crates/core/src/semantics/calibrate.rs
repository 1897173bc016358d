use crate::model::{Axis, Orientation, Scale, Span, Tick, TickValue};
use crate::regiondetect::{AxisLine, AxisSide, TextElement, TickMark};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "code", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CalibError {
    #[error("CALIBRATION_INSUFFICIENT: {found} numeric ticks")]
    CalibrationInsufficient { found: usize },
    #[error("CALIBRATION_NONMONOTONE: tick values are not monotone in pixel order")]
    CalibrationNonmonotone,
    #[error("OUT_OF_SPAN: {what} outside the calibrated span")]
    OutOfSpan { what: String },
}

impl CalibError {
    pub fn code(&self) -> &'static str {
        match self {
            CalibError::CalibrationInsufficient { .. } => "CALIBRATION_INSUFFICIENT",
            CalibError::CalibrationNonmonotone => "CALIBRATION_NONMONOTONE",
            CalibError::OutOfSpan { .. } => "OUT_OF_SPAN",
        }
    }
}

/// Accepts integers, decimals, thousands separators and a `%` suffix.
pub fn parse_number(text: &str) -> Option<f64> {
    let t = text.trim();
    let t = t.strip_suffix('%').unwrap_or(t).replace(',', "");
    if t.is_empty() || !t.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+')) {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Piecewise-linear pixel to value map through every tick of a quantitative
/// axis. Exact at ticks; linear extension of the end segments up to the
/// axis span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct AxisCalibration {
    pub axis: Axis,
}

impl AxisCalibration {
    /// Builds a calibration from an axis whose ticks carry numbers.
    pub fn from_axis(axis: &Axis) -> Result<Self, CalibError> {
        let mut pts: Vec<(i32, f64)> = axis.ticks.iter().filter_map(|t| t.value.as_number().map(|v| (t.pixel, v))).collect();
        if pts.len() < 2 {
            return Err(CalibError::CalibrationInsufficient { found: pts.len() });
        }
        pts.sort_by_key(|p| p.0);
        let increasing = pts[1].1 > pts[0].1;
        for w in pts.windows(2) {
            let ok = w[1].0 > w[0].0 && if increasing { w[1].1 > w[0].1 } else { w[1].1 < w[0].1 };
            if !ok {
                return Err(CalibError::CalibrationNonmonotone);
            }
        }
        let mut axis = axis.clone();
        axis.ticks = pts.into_iter().map(|(pixel, v)| Tick { pixel, value: TickValue::Number(v) }).collect();
        Ok(AxisCalibration { axis })
    }

    fn points(&self) -> Vec<(f64, f64)> {
        self.axis.ticks.iter().filter_map(|t| t.value.as_number().map(|v| (f64::from(t.pixel), v))).collect()
    }

    fn span(&self) -> Span {
        self.axis.pixel_span
    }

    /// Value at a possibly fractional pixel position.
    pub fn value_at(&self, pixel: f64) -> Result<f64, CalibError> {
        let Span { min, max } = self.span();
        if pixel < f64::from(min) || pixel > f64::from(max) {
            return Err(CalibError::OutOfSpan { what: format!("pixel {pixel}") });
        }
        let pts = self.points();
        let i = pts.partition_point(|p| p.0 <= pixel).clamp(1, pts.len() - 1);
        let ((p0, v0), (p1, v1)) = (pts[i - 1], pts[i]);
        if pixel == p0 {
            return Ok(v0);
        }
        if pixel == p1 {
            return Ok(v1);
        }
        Ok(v0 + (pixel - p0) * (v1 - v0) / (p1 - p0))
    }

    pub fn pixel_to_value(&self, pixel: i32) -> Result<f64, CalibError> {
        self.value_at(f64::from(pixel))
    }

    pub fn value_to_pixel(&self, value: f64) -> Result<i32, CalibError> {
        let pts = self.points();
        let Span { min, max } = self.span();
        let (lo_v, hi_v) = (self.value_at(f64::from(min))?, self.value_at(f64::from(max))?);
        if value < lo_v.min(hi_v) || value > lo_v.max(hi_v) {
            return Err(CalibError::OutOfSpan { what: format!("value {value}") });
        }
        let increasing = pts[1].1 > pts[0].1;
        let i = pts
            .partition_point(|p| if increasing { p.1 <= value } else { p.1 >= value })
            .clamp(1, pts.len() - 1);
        let ((p0, v0), (p1, v1)) = (pts[i - 1], pts[i]);
        let p = p0 + (value - v0) * (p1 - p0) / (v1 - v0);
        Ok((p.round() as i32).clamp(min, max))
    }

    /// Numeric extent of the ticks.
    pub fn range(&self) -> f64 {
        self.axis.value_range().map_or(0.0, |(lo, hi)| hi - lo)
    }
}

fn side_matches(orientation: Orientation, side: AxisSide) -> bool {
    match orientation {
        Orientation::Vertical => matches!(side, AxisSide::Left | AxisSide::Right),
        Orientation::Horizontal => matches!(side, AxisSide::Bottom | AxisSide::Top),
    }
}

/// Reconstructs an axis from its line, the ticks along it and their labels.
/// The scale is quantitative when every bound label parses as a number.
pub fn axis_from_detection(line: &AxisLine, ticks: &[TickMark], labels: &[TextElement], name: &str) -> Axis {
    axis_with_scale(line, ticks, labels, name, None)
}

/// As [`axis_from_detection`], but a `Categorical` hint keeps numeric labels
/// (years, bin starts) as categories.
pub fn axis_with_scale(line: &AxisLine, ticks: &[TickMark], labels: &[TextElement], name: &str, hint: Option<Scale>) -> Axis {
    let bound: Vec<(i32, String)> = ticks
        .iter()
        .filter(|t| side_matches(line.orientation, t.axis_side))
        .filter_map(|t| {
            let label = labels.iter().find(|e| Some(e.id) == t.label)?;
            Some((t.pixel, label.text.clone().unwrap_or_default()))
        })
        .collect();
    let numeric = hint != Some(Scale::Categorical) && !bound.is_empty() && bound.iter().all(|(_, s)| parse_number(s).is_some());
    let ticks = bound
        .into_iter()
        .map(|(pixel, s)| Tick {
            pixel,
            value: match parse_number(&s) {
                Some(v) if numeric => TickValue::Number(v),
                _ => TickValue::Category(s),
            },
        })
        .collect();
    Axis {
        name: name.to_owned(),
        orientation: line.orientation,
        scale: if numeric { Scale::LinearQuantitative } else { Scale::Categorical },
        ticks,
        pixel_span: line.span,
        position: line.position,
    }
}

/// Calibrates the quantitative axis drawn as `line`.
pub fn calibrate_axis(line: &AxisLine, ticks: &[TickMark], labels: &[TextElement]) -> Result<AxisCalibration, CalibError> {
    let axis = axis_from_detection(line, ticks, labels, "");
    if axis.scale != Scale::LinearQuantitative {
        let found = axis.ticks.iter().filter(|t| t.value.as_number().is_some()).count();
        return Err(CalibError::CalibrationInsufficient { found });
    }
    AxisCalibration::from_axis(&axis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BBox;
    use proptest::prelude::*;

    fn vertical(ticks: &[(i32, f64)]) -> AxisCalibration {
        AxisCalibration::from_axis(&Axis {
            name: "y".into(),
            orientation: Orientation::Vertical,
            scale: Scale::LinearQuantitative,
            ticks: ticks.iter().map(|&(pixel, v)| Tick { pixel, value: TickValue::Number(v) }).collect(),
            pixel_span: Span { min: 50, max: 450 },
            position: 60,
        })
        .unwrap()
    }

    #[test]
    fn linear_examples() {
        let cal = vertical(&[(400, 0.0), (100, 100.0)]);
        assert_eq!(cal.pixel_to_value(400).unwrap(), 0.0);
        assert_eq!(cal.pixel_to_value(250).unwrap(), 50.0);
        assert_eq!(cal.pixel_to_value(175).unwrap(), 75.0);
        assert!((cal.pixel_to_value(420).unwrap() + 20.0 / 3.0).abs() < 1e-9);
        assert_eq!(cal.pixel_to_value(451).unwrap_err().code(), "OUT_OF_SPAN");
        assert_eq!(cal.value_to_pixel(75.0).unwrap(), 175);
    }

    #[test]
    fn failures() {
        let axis = |ticks: Vec<Tick>| Axis {
            name: String::new(),
            orientation: Orientation::Vertical,
            scale: Scale::LinearQuantitative,
            ticks,
            pixel_span: Span { min: 0, max: 500 },
            position: 0,
        };
        let t = |pixel, v| Tick { pixel, value: TickValue::Number(v) };
        assert_eq!(AxisCalibration::from_axis(&axis(vec![t(10, 1.0)])).unwrap_err().code(), "CALIBRATION_INSUFFICIENT");
        let err = AxisCalibration::from_axis(&axis(vec![t(10, 1.0), t(20, 3.0), t(30, 2.0)])).unwrap_err();
        assert_eq!(err.code(), "CALIBRATION_NONMONOTONE");
    }

    #[test]
    fn numbers() {
        assert_eq!(parse_number("1,250"), Some(1250.0));
        assert_eq!(parse_number("40%"), Some(40.0));
        assert_eq!(parse_number("2.5"), Some(2.5));
        assert_eq!(parse_number("A"), None);
        assert_eq!(parse_number(""), None);
    }

    #[test]
    fn detected_ticks_bind_to_labels() {
        let line = AxisLine { orientation: Orientation::Vertical, position: 60, span: Span { min: 100, max: 400 } };
        let el = |id, text: &str| TextElement {
            id,
            bbox: BBox::new(30, 40, 0, 6),
            glyphs: vec![],
            orientation: Orientation::Horizontal,
            text: Some(text.into()),
        };
        let ticks = vec![
            TickMark { axis_side: AxisSide::Left, pixel: 400, label: Some(1) },
            TickMark { axis_side: AxisSide::Left, pixel: 100, label: Some(2) },
            TickMark { axis_side: AxisSide::Bottom, pixel: 90, label: Some(3) },
        ];
        let cal = calibrate_axis(&line, &ticks, &[el(1, "0"), el(2, "100"), el(3, "X")]).unwrap();
        assert_eq!(cal.pixel_to_value(250).unwrap(), 50.0);
        let bad = calibrate_axis(&line, &ticks[..1], &[el(1, "0")]).unwrap_err();
        assert_eq!(bad.code(), "CALIBRATION_INSUFFICIENT");
    }

    proptest! {
        #[test]
        fn inverse_within_one_pixel(top in 60i32..200, bottom in 300i32..440, hi in 1.0f64..1000.0, p in 50i32..=450) {
            let cal = vertical(&[(bottom, 0.0), ((top + bottom) / 2, hi / 2.0), (top, hi)]);
            let v = cal.pixel_to_value(p).unwrap();
            let back = cal.value_to_pixel(v).unwrap();
            prop_assert!((back - p).abs() <= 1);
            if p < 450 {
                prop_assert!(cal.pixel_to_value(p + 1).unwrap() < v);
            }
        }
    }
}
