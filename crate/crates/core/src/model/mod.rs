//! Chart vocabulary shared by every stage: chart taxonomy, shape classes,
//! axes with tick calibration points, and the chart description document.

mod bbox;
mod mask;
mod validate;

pub use bbox::BBox;
pub use mask::{Mask, Run};
pub use validate::{validate_spec, SpecViolation, ValidationReport};

use crate::doc::{Document, SchemaVersion};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// The twelve supported chart types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
pub enum ChartType {
    #[serde(rename = "line")]
    Line,
    #[serde(rename = "bar")]
    Bar,
    #[serde(rename = "stacked-bar")]
    StackedBar,
    #[serde(rename = "stacked-bar-100")]
    StackedBar100,
    #[serde(rename = "pie")]
    Pie,
    #[serde(rename = "histogram")]
    Histogram,
    #[serde(rename = "scatterplot")]
    Scatterplot,
    #[serde(rename = "area")]
    Area,
    #[serde(rename = "stacked-area")]
    StackedArea,
    #[serde(rename = "bubble")]
    Bubble,
    #[serde(rename = "choropleth")]
    Choropleth,
    #[serde(rename = "treemap")]
    Treemap,
}

impl ChartType {
    pub const ALL: [ChartType; 12] = [
        ChartType::Line,
        ChartType::Bar,
        ChartType::StackedBar,
        ChartType::StackedBar100,
        ChartType::Pie,
        ChartType::Histogram,
        ChartType::Scatterplot,
        ChartType::Area,
        ChartType::StackedArea,
        ChartType::Bubble,
        ChartType::Choropleth,
        ChartType::Treemap,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChartType::Line => "line",
            ChartType::Bar => "bar",
            ChartType::StackedBar => "stacked-bar",
            ChartType::StackedBar100 => "stacked-bar-100",
            ChartType::Pie => "pie",
            ChartType::Histogram => "histogram",
            ChartType::Scatterplot => "scatterplot",
            ChartType::Area => "area",
            ChartType::StackedArea => "stacked-area",
            ChartType::Bubble => "bubble",
            ChartType::Choropleth => "choropleth",
            ChartType::Treemap => "treemap",
        }
    }

    /// Chart types drawn without quantitative axes.
    pub fn is_axis_free(self) -> bool {
        matches!(self, ChartType::Pie | ChartType::Treemap | ChartType::Choropleth)
    }

    pub fn is_stacked(self) -> bool {
        matches!(self, ChartType::StackedBar | ChartType::StackedBar100 | ChartType::StackedArea)
    }
}

impl fmt::Display for ChartType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChartType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChartType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown chart type `{s}`"))
    }
}

/// Geometry family of a chart's data marks; selects the segmentation path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeClass {
    LineBased,
    DotBased,
    Rectangular,
    Irregular,
}

impl ShapeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ShapeClass::LineBased => "line-based",
            ShapeClass::DotBased => "dot-based",
            ShapeClass::Rectangular => "rectangular",
            ShapeClass::Irregular => "irregular",
        }
    }
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Total mapping from chart type to the shape class of its marks.
pub fn classify_shape(chart_type: ChartType) -> ShapeClass {
    match chart_type {
        ChartType::Line | ChartType::Area | ChartType::StackedArea => ShapeClass::LineBased,
        ChartType::Scatterplot | ChartType::Bubble => ShapeClass::DotBased,
        ChartType::Bar
        | ChartType::StackedBar
        | ChartType::StackedBar100
        | ChartType::Histogram
        | ChartType::Treemap => ShapeClass::Rectangular,
        ChartType::Pie | ChartType::Choropleth => ShapeClass::Irregular,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    LinearQuantitative,
    Categorical,
}

/// A tick's data value: a number on quantitative axes, a label on categorical ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum TickValue {
    Number(f64),
    Category(String),
}

impl TickValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            TickValue::Number(v) => Some(*v),
            TickValue::Category(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Tick {
    /// Position along the axis (x for horizontal axes, y for vertical ones).
    pub pixel: i32,
    pub value: TickValue,
}

/// Inclusive pixel interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Span {
    pub min: i32,
    pub max: i32,
}

impl Span {
    pub fn contains(&self, p: i32) -> bool {
        p >= self.min && p <= self.max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: String,
    pub orientation: Orientation,
    pub scale: Scale,
    pub ticks: Vec<Tick>,
    pub pixel_span: Span,
    /// Perpendicular coordinate of the axis line: y of a horizontal axis,
    /// x of a vertical one.
    pub position: i32,
}

impl Axis {
    pub fn is_quantitative(&self) -> bool {
        self.scale == Scale::LinearQuantitative
    }

    /// Numeric range covered by the ticks, if quantitative.
    pub fn value_range(&self) -> Option<(f64, f64)> {
        let values: Vec<f64> = self.ticks.iter().filter_map(|t| t.value.as_number()).collect();
        let lo = values.iter().copied().reduce(f64::min)?;
        let hi = values.iter().copied().reduce(f64::max)?;
        Some((lo, hi))
    }
}

/// Visual channel a series is encoded in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    X,
    Y,
    Color,
    Size,
    Angle,
    Area,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SeriesEncoding {
    pub name: String,
    pub channel: Channel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

/// Structured description of a chart: type, axes, series and encodings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub schema_version: SchemaVersion,
    pub chart_type: ChartType,
    pub shape_class: ShapeClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub axes: Vec<Axis>,
    pub series: Vec<SeriesEncoding>,
    pub image_size: ImageSize,
}

impl Document for ChartSpec {
    const SCHEMA: &'static str = "chartspec.v1";
}

impl ChartSpec {
    pub fn axis(&self, orientation: Orientation) -> Option<&Axis> {
        self.axes.iter().find(|a| a.orientation == orientation)
    }

    pub fn quantitative_axes(&self) -> impl Iterator<Item = &Axis> {
        self.axes.iter().filter(|a| a.is_quantitative())
    }
}

/// Semantic role of a chart region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    DataMark,
    /// Text naming a tick position (numerals, category names).
    AxisLabel,
    /// The tick stroke itself.
    Tick,
    LegendSwatch,
    LegendLabel,
    Title,
    AxisTitle,
    Other,
}

impl Role {
    /// Regions that may be highlighted as reading context without being a
    /// subtask target.
    pub fn is_axis_context(self) -> bool {
        matches!(self, Role::AxisLabel | Role::Tick | Role::AxisTitle | Role::Other)
    }
}

/// 8-bit RGB colour, serialized as `#rrggbb`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(into = "String", try_from = "String")]
pub struct Rgb(#[schemars(with = "String")] pub [u8; 3]);

impl Rgb {
    pub const WHITE: Rgb = Rgb([255, 255, 255]);
    pub const BLACK: Rgb = Rgb([0, 0, 0]);

    pub fn luminance(self) -> f64 {
        let [r, g, b] = self.0;
        0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)
    }

    /// Largest per-channel absolute difference.
    pub fn channel_distance(self, other: Rgb) -> u8 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a.abs_diff(*b)).max().unwrap_or(0)
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", hex::encode(self.0))
    }
}

impl From<Rgb> for String {
    fn from(c: Rgb) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for Rgb {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for Rgb {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.strip_prefix('#').ok_or_else(|| format!("colour `{s}` must start with #"))?;
        let bytes = hex::decode(digits).map_err(|e| format!("colour `{s}`: {e}"))?;
        let arr: [u8; 3] = bytes.try_into().map_err(|_| format!("colour `{s}` must have 6 hex digits"))?;
        Ok(Rgb(arr))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_table() {
        assert_eq!(classify_shape(ChartType::Line), ShapeClass::LineBased);
        assert_eq!(classify_shape(ChartType::Bar), ShapeClass::Rectangular);
        assert_eq!(classify_shape(ChartType::Bubble), ShapeClass::DotBased);
        assert_eq!(classify_shape(ChartType::Choropleth), ShapeClass::Irregular);
        assert_eq!(classify_shape(ChartType::Treemap), ShapeClass::Rectangular);
        assert_eq!(classify_shape(ChartType::Pie), ShapeClass::Irregular);
        assert_eq!(classify_shape(ChartType::StackedArea), ShapeClass::LineBased);
        assert_eq!(classify_shape(ChartType::Scatterplot), ShapeClass::DotBased);
    }

    #[test]
    fn chart_type_names_round_trip() {
        for t in ChartType::ALL {
            assert_eq!(t.as_str().parse::<ChartType>().unwrap(), t);
            let json = serde_json::to_string(&t).unwrap();
            assert_eq!(json, format!("\"{}\"", t.as_str()));
            assert_eq!(serde_json::from_str::<ChartType>(&json).unwrap(), t);
        }
        assert!("donut".parse::<ChartType>().is_err());
    }

    #[test]
    fn rgb_hex() {
        let c: Rgb = "#e69f00".parse().unwrap();
        assert_eq!(c, Rgb([230, 159, 0]));
        assert_eq!(c.to_string(), "#e69f00");
        assert!("e69f00".parse::<Rgb>().is_err());
        assert!("#e69f".parse::<Rgb>().is_err());
        assert_eq!(c.channel_distance(Rgb::WHITE), 255);
    }
}
