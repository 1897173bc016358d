//! Classical region identification: glyphs, text elements, colour regions,
//! axes with ticks, and paths through line-based marks.

mod axes;
mod glyphs;
mod path;
mod segment;

pub use axes::{detect_axes_ticks, LABEL_RADIUS};
pub use glyphs::{detect_glyphs, group_glyphs, linked, InkMap, INK_THRESHOLD};
pub use path::interpolate_path;
pub use segment::{quantize, segment_marks, EDGE_THRESHOLD, MIN_REGION_AREA, QUANT_SHIFT};

use crate::doc::{Document, SchemaVersion};
use crate::font;
use crate::model::{BBox, ImageSize, Mask, Orientation, Rgb, ShapeClass, Span};
use crate::raster::Image;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Glyph {
    pub bbox: BBox,
    pub ink_pixel_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TextElement {
    pub id: u32,
    pub bbox: BBox,
    pub glyphs: Vec<Glyph>,
    pub orientation: Orientation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum KindGuess {
    Text,
    Mark,
    AxisLine,
    Tick,
    LegendSwatch,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RawRegion {
    pub id: u32,
    pub bbox: BBox,
    pub mask: Mask,
    pub dominant_color: Rgb,
    pub kind_guess: KindGuess,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum AxisSide {
    Left,
    Bottom,
    Right,
    Top,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TickMark {
    pub axis_side: AxisSide,
    /// Position along the axis.
    pub pixel: i32,
    /// Id of the nearest text element, if one lies within reach.
    pub label: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct AxisLine {
    pub orientation: Orientation,
    /// y of a horizontal line, x of a vertical one.
    pub position: i32,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DetectError {
    #[error("AXIS_NOT_FOUND: no dark line spans 30% of the image")]
    AxisNotFound,
    #[error("PATH_NOT_FOUND: fewer than two columns contain the series colour")]
    PathNotFound,
}

impl DetectError {
    pub fn code(&self) -> &'static str {
        match self {
            DetectError::AxisNotFound => "AXIS_NOT_FOUND",
            DetectError::PathNotFound => "PATH_NOT_FOUND",
        }
    }
}

/// Everything the classical stage finds in one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    pub schema_version: SchemaVersion,
    pub image_size: ImageSize,
    pub shape_class: ShapeClass,
    pub text_elements: Vec<TextElement>,
    pub regions: Vec<RawRegion>,
    pub axes: Vec<AxisLine>,
    pub ticks: Vec<TickMark>,
}

impl Document for Detection {
    const SCHEMA: &'static str = "regions.v1";
}

/// Reads every element with the bundled font.
pub fn recognize_text(img: &Image, elements: &mut [TextElement]) {
    let ink = InkMap::new(img, INK_THRESHOLD);
    for e in elements {
        let boxes: Vec<BBox> = e.glyphs.iter().map(|g| g.bbox).collect();
        e.text = Some(font::recognize_line(&boxes, &|x, y| ink.get(x, y)));
    }
}

/// Runs the full classical stage. Charts without axes yield empty axis and
/// tick lists.
pub fn detect(img: &Image, shape: ShapeClass) -> Detection {
    let mut text = group_glyphs(&detect_glyphs(img));
    recognize_text(img, &mut text);
    let regions = segment_marks(img, &text, shape);
    let (axes, ticks) = detect_axes_ticks(img, &text).unwrap_or_default();
    Detection {
        schema_version: SchemaVersion,
        image_size: ImageSize { width: img.width(), height: img.height() },
        shape_class: shape,
        text_elements: text,
        regions,
        axes,
        ticks,
    }
}
