use super::{classify_shape, Axis, ChartSpec, ChartType, Orientation, ShapeClass, TickValue};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

/// One violated chart-description invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "code", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SpecViolation {
    ShapeClassMismatch { expected: ShapeClass, found: ShapeClass },
    AxisTicksInsufficient { axis: String, ticks: usize },
    AxisTicksNotMonotone { axis: String },
    AxisValuesNotMonotone { axis: String },
    TickKindMismatch { axis: String },
    AxisForbiddenForType { axis: String, chart_type: ChartType },
    AxisOutOfBounds { axis: String },
    BubbleChannelsInsufficient { channels: usize },
    ImageSizeInvalid,
}

impl SpecViolation {
    pub fn code(&self) -> &'static str {
        match self {
            SpecViolation::ShapeClassMismatch { .. } => "SHAPE_CLASS_MISMATCH",
            SpecViolation::AxisTicksInsufficient { .. } => "AXIS_TICKS_INSUFFICIENT",
            SpecViolation::AxisTicksNotMonotone { .. } => "AXIS_TICKS_NOT_MONOTONE",
            SpecViolation::AxisValuesNotMonotone { .. } => "AXIS_VALUES_NOT_MONOTONE",
            SpecViolation::TickKindMismatch { .. } => "TICK_KIND_MISMATCH",
            SpecViolation::AxisForbiddenForType { .. } => "AXIS_FORBIDDEN_FOR_TYPE",
            SpecViolation::AxisOutOfBounds { .. } => "AXIS_OUT_OF_BOUNDS",
            SpecViolation::BubbleChannelsInsufficient { .. } => "BUBBLE_CHANNELS_INSUFFICIENT",
            SpecViolation::ImageSizeInvalid => "IMAGE_SIZE_INVALID",
        }
    }
}

impl fmt::Display for SpecViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())?;
        match self {
            SpecViolation::ShapeClassMismatch { expected, found } => write!(f, ": expected {expected}, found {found}"),
            SpecViolation::AxisTicksInsufficient { axis, ticks } => write!(f, ": axis `{axis}` has {ticks} tick(s)"),
            SpecViolation::AxisTicksNotMonotone { axis }
            | SpecViolation::AxisValuesNotMonotone { axis }
            | SpecViolation::TickKindMismatch { axis }
            | SpecViolation::AxisOutOfBounds { axis } => write!(f, ": axis `{axis}`"),
            SpecViolation::AxisForbiddenForType { axis, chart_type } => {
                write!(f, ": {chart_type} charts have no quantitative axis, found `{axis}`")
            }
            SpecViolation::BubbleChannelsInsufficient { channels } => write!(f, ": {channels} distinct channel(s)"),
            SpecViolation::ImageSizeInvalid => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ValidationReport {
    pub violations: Vec<SpecViolation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn codes(&self) -> Vec<&'static str> {
        self.violations.iter().map(SpecViolation::code).collect()
    }

    pub fn has(&self, code: &str) -> bool {
        self.violations.iter().any(|v| v.code() == code)
    }
}

fn strictly_monotone<T: PartialOrd>(xs: &[T]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1]) || xs.windows(2).all(|w| w[0] > w[1])
}

fn check_axis(spec: &ChartSpec, axis: &Axis, out: &mut Vec<SpecViolation>) {
    let name = axis.name.clone();
    if axis.is_quantitative() {
        if spec.chart_type.is_axis_free() {
            out.push(SpecViolation::AxisForbiddenForType { axis: name.clone(), chart_type: spec.chart_type });
        }
        if axis.ticks.len() < 2 {
            out.push(SpecViolation::AxisTicksInsufficient { axis: name.clone(), ticks: axis.ticks.len() });
        }
        let values: Vec<f64> = axis.ticks.iter().filter_map(|t| t.value.as_number()).collect();
        if values.len() != axis.ticks.len() || values.iter().any(|v| !v.is_finite()) {
            out.push(SpecViolation::TickKindMismatch { axis: name.clone() });
        } else if !strictly_monotone(&values) {
            out.push(SpecViolation::AxisValuesNotMonotone { axis: name.clone() });
        }
    } else if axis.ticks.iter().any(|t| matches!(t.value, TickValue::Number(_))) {
        out.push(SpecViolation::TickKindMismatch { axis: name.clone() });
    }

    let pixels: Vec<i32> = axis.ticks.iter().map(|t| t.pixel).collect();
    if !strictly_monotone(&pixels) {
        out.push(SpecViolation::AxisTicksNotMonotone { axis: name.clone() });
    }

    let (extent, cross) = match axis.orientation {
        Orientation::Horizontal => (spec.image_size.width, spec.image_size.height),
        Orientation::Vertical => (spec.image_size.height, spec.image_size.width),
    };
    let in_range = |p: i32| p >= 0 && i64::from(p) < i64::from(extent);
    let span_ok = axis.pixel_span.min <= axis.pixel_span.max
        && in_range(axis.pixel_span.min)
        && in_range(axis.pixel_span.max)
        && axis.position >= 0
        && i64::from(axis.position) < i64::from(cross)
        && pixels.iter().all(|p| axis.pixel_span.contains(*p));
    if !span_ok {
        out.push(SpecViolation::AxisOutOfBounds { axis: name });
    }
}

/// Checks every chart-description invariant; an empty report means valid.
pub fn validate_spec(spec: &ChartSpec) -> ValidationReport {
    let mut violations = Vec::new();
    if spec.image_size.width == 0 || spec.image_size.height == 0 {
        violations.push(SpecViolation::ImageSizeInvalid);
    }
    let expected = classify_shape(spec.chart_type);
    if spec.shape_class != expected {
        violations.push(SpecViolation::ShapeClassMismatch { expected, found: spec.shape_class });
    }
    for axis in &spec.axes {
        check_axis(spec, axis, &mut violations);
    }
    if spec.chart_type == ChartType::Bubble {
        let mut channels: BTreeSet<_> = spec.series.iter().map(|s| s.channel).collect();
        for a in spec.quantitative_axes() {
            channels.insert(match a.orientation {
                Orientation::Horizontal => super::Channel::X,
                Orientation::Vertical => super::Channel::Y,
            });
        }
        if channels.len() < 3 {
            violations.push(SpecViolation::BubbleChannelsInsufficient { channels: channels.len() });
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc::SchemaVersion;
    use crate::model::{Channel, ImageSize, Scale, SeriesEncoding, Span, Tick};

    fn quant_axis(ticks: &[(i32, f64)]) -> Axis {
        Axis {
            name: "VALUE".into(),
            orientation: Orientation::Vertical,
            scale: Scale::LinearQuantitative,
            ticks: ticks.iter().map(|&(p, v)| Tick { pixel: p, value: TickValue::Number(v) }).collect(),
            pixel_span: Span { min: 100, max: 500 },
            position: 80,
        }
    }

    fn spec(chart_type: ChartType, axes: Vec<Axis>) -> ChartSpec {
        ChartSpec {
            schema_version: SchemaVersion,
            chart_type,
            shape_class: classify_shape(chart_type),
            title: None,
            axes,
            series: vec![SeriesEncoding { name: "VALUE".into(), channel: Channel::Y }],
            image_size: ImageSize { width: 800, height: 600 },
        }
    }

    #[test]
    fn single_tick_is_insufficient() {
        let r = validate_spec(&spec(ChartType::Bar, vec![quant_axis(&[(500, 0.0)])]));
        assert!(r.has("AXIS_TICKS_INSUFFICIENT"), "{:?}", r.codes());
    }

    #[test]
    fn pie_with_quantitative_axis_is_forbidden() {
        let r = validate_spec(&spec(ChartType::Pie, vec![quant_axis(&[(500, 0.0), (100, 10.0)])]));
        assert_eq!(r.codes(), vec!["AXIS_FORBIDDEN_FOR_TYPE"]);
    }

    #[test]
    fn non_monotone_and_out_of_bounds() {
        let r = validate_spec(&spec(ChartType::Bar, vec![quant_axis(&[(500, 0.0), (300, 20.0), (400, 10.0)])]));
        assert!(r.has("AXIS_TICKS_NOT_MONOTONE"));
        assert!(r.has("AXIS_VALUES_NOT_MONOTONE"));
        let mut a = quant_axis(&[(500, 0.0), (100, 10.0)]);
        a.pixel_span = Span { min: 100, max: 700 };
        assert!(validate_spec(&spec(ChartType::Bar, vec![a])).has("AXIS_OUT_OF_BOUNDS"));
    }

    #[test]
    fn bubble_needs_three_channels() {
        let mut s = spec(ChartType::Bubble, vec![quant_axis(&[(500, 0.0), (100, 10.0)])]);
        assert!(validate_spec(&s).has("BUBBLE_CHANNELS_INSUFFICIENT"));
        s.series.push(SeriesEncoding { name: "POP".into(), channel: Channel::Size });
        s.series.push(SeriesEncoding { name: "GDP".into(), channel: Channel::X });
        assert!(validate_spec(&s).is_empty(), "{:?}", validate_spec(&s).codes());
    }

    #[test]
    fn shape_class_must_match_table() {
        let mut s = spec(ChartType::Line, vec![]);
        s.shape_class = ShapeClass::Rectangular;
        assert_eq!(validate_spec(&s).codes(), vec!["SHAPE_CLASS_MISMATCH"]);
    }
}
