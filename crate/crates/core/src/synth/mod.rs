//! Deterministic synthetic chart renderer with exact ground truth.

mod corpus;
mod layout;
mod render;

pub use corpus::{chart_seed, corpus_from_bank, generate_corpus, CorpusEntry, TaskBank, TaskFixture, TASKBANK_JSON};
pub use layout::{nice_axis, NiceAxis};
pub use render::render;

use crate::doc::{Document, SchemaVersion};
use crate::font;
use crate::model::{BBox, ChartSpec, ChartType, Mask, Rgb, Role};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Default series colours. All are light (luminance >= 128) so that only text,
/// axes and ticks binarize as ink, and pairwise channel distance is >= 48.
pub const PALETTE: [Rgb; 8] = [
    Rgb([0xe6, 0x9f, 0x00]),
    Rgb([0x56, 0xb4, 0xe9]),
    Rgb([0xf0, 0xe4, 0x42]),
    Rgb([0x66, 0xc2, 0xa5]),
    Rgb([0xcc, 0x79, 0xa7]),
    Rgb([0xc0, 0xc0, 0xc0]),
    Rgb([0xcd, 0x7f, 0x32]),
    Rgb([0xfc, 0x8d, 0x62]),
];

/// Sequential class colours for choropleth maps, lightest first.
pub const CLASS_COLORS: [Rgb; 5] = [
    Rgb([255, 247, 188]),
    Rgb([254, 196, 79]),
    Rgb([250, 140, 60]),
    Rgb([236, 90, 110]),
    Rgb([160, 160, 255]),
];

pub const MIN_COLOR_DISTANCE: u8 = 48;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct NameDesc {
    pub name: String,
    /// Natural-language phrase used in region labels; defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl NameDesc {
    pub fn describe(&self) -> &str {
        self.description.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DataRow {
    pub category: String,
    pub series: String,
    /// Value on the y channel (or the slice/cell/region value).
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Margins {
    pub left: i32,
    pub right: i32,
    pub top: i32,
    pub bottom: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct Style {
    /// Explicit series colours; when absent the default palette is rotated by the seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub palette: Option<Vec<Rgb>>,
    pub margins: Margins,
    pub font: String,
    pub font_scale: i32,
    pub width: u32,
    pub height: u32,
}

impl Default for Style {
    fn default() -> Self {
        Style {
            palette: None,
            margins: Margins { left: 100, right: 60, top: 110, bottom: 90 },
            font: font::FONT_ID.to_owned(),
            font_scale: 2,
            width: 800,
            height: 600,
        }
    }
}

/// Input to the renderer: chart type, data table and styling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub schema_version: SchemaVersion,
    pub chart_id: String,
    pub chart_type: ChartType,
    pub title: String,
    /// Category axis name, or the x variable of dot charts.
    pub x_name: String,
    /// Value axis name.
    pub y_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_name: Option<String>,
    /// Series in stacking / legend order.
    pub series: Vec<NameDesc>,
    /// Categories in axis order.
    pub categories: Vec<NameDesc>,
    pub table: Vec<DataRow>,
    #[serde(default)]
    pub style: Style,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Document for DataSpec {
    const SCHEMA: &'static str = "dataspec.v1";
}

impl DataSpec {
    pub fn row(&self, series: &str, category: &str) -> Option<&DataRow> {
        self.table.iter().find(|r| r.series == series && r.category == category)
    }

    pub fn series_desc<'a>(&'a self, name: &'a str) -> &'a str {
        self.series.iter().find(|s| s.name == name).map_or(name, NameDesc::describe)
    }

    pub fn category_desc<'a>(&'a self, name: &'a str) -> &'a str {
        self.categories.iter().find(|c| c.name == name).map_or(name, NameDesc::describe)
    }

    /// Series colours after palette rotation.
    pub fn colors(&self, n: usize) -> Vec<Rgb> {
        match &self.style.palette {
            Some(p) => p.iter().copied().cycle().take(n).collect(),
            None => {
                let rot = (self.rng_seed % PALETTE.len() as u64) as usize;
                (0..n).map(|i| PALETTE[(i + rot) % PALETTE.len()]).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("INVALID_DATA: {0}")]
    InvalidData(String),
    #[error("RENDER_OVERFLOW: {0}")]
    RenderOverflow(String),
}

impl SynthError {
    pub fn code(&self) -> &'static str {
        match self {
            SynthError::InvalidData(_) => "INVALID_DATA",
            SynthError::RenderOverflow(_) => "RENDER_OVERFLOW",
        }
    }
}

/// Checks the DataSpec invariants that do not depend on layout.
pub fn validate_data(d: &DataSpec) -> Result<(), SynthError> {
    let bad = |m: String| Err(SynthError::InvalidData(m));
    if d.table.is_empty() {
        return bad("table has no rows".into());
    }
    if d.style.font != font::FONT_ID {
        return bad(format!("unknown font `{}`", d.style.font));
    }
    if d.style.font_scale < 1 {
        return bad("font scale must be positive".into());
    }
    let series: BTreeSet<&str> = d.series.iter().map(|s| s.name.as_str()).collect();
    let cats: BTreeSet<&str> = d.categories.iter().map(|c| c.name.as_str()).collect();
    if series.len() != d.series.len() || cats.len() != d.categories.len() {
        return bad("duplicate series or category name".into());
    }
    let mut keys = BTreeSet::new();
    for r in &d.table {
        if !r.value.is_finite() || r.x.is_some_and(|v| !v.is_finite()) || r.size.is_some_and(|v| !v.is_finite()) {
            return bad(format!("non-finite value in row {}/{}", r.series, r.category));
        }
        if r.value < 0.0 {
            return bad(format!("negative value in row {}/{}", r.series, r.category));
        }
        if !series.contains(r.series.as_str()) || !cats.contains(r.category.as_str()) {
            return bad(format!("row {}/{} names an undeclared series or category", r.series, r.category));
        }
        if !keys.insert((r.series.as_str(), r.category.as_str())) {
            return bad(format!("duplicate row {}/{}", r.series, r.category));
        }
        let dots = matches!(d.chart_type, ChartType::Scatterplot | ChartType::Bubble);
        if dots && r.x.is_none() {
            return bad(format!("row {}/{} needs an x value", r.series, r.category));
        }
        if d.chart_type == ChartType::Bubble && r.size.is_none_or(|s| s <= 0.0) {
            return bad(format!("row {}/{} needs a positive size", r.series, r.category));
        }
    }
    let texts = std::iter::once(d.title.as_str())
        .chain([d.x_name.as_str(), d.y_name.as_str()])
        .chain(d.series.iter().map(|s| s.name.as_str()))
        .chain(d.categories.iter().map(|c| c.name.as_str()));
    for t in texts {
        if !font::supports_text(t) {
            return bad(format!("text `{t}` uses characters outside {}", font::FONT_ID));
        }
    }
    let coloured = match d.chart_type {
        ChartType::Pie => d.categories.len(),
        ChartType::Choropleth => 0,
        _ => d.series.len(),
    };
    if coloured > PALETTE.len() && d.style.palette.is_none() {
        return bad(format!("more than {} colours needed", PALETTE.len()));
    }
    let colors = d.colors(coloured);
    if let Some(p) = &d.style.palette {
        check_distinct(p)?;
    } else {
        check_distinct(&colors)?;
    }
    Ok(())
}

pub fn check_distinct(colors: &[Rgb]) -> Result<(), SynthError> {
    for (i, a) in colors.iter().enumerate() {
        if a.luminance() < 128.0 {
            return Err(SynthError::InvalidData(format!("colour {a} is too dark to separate from ink")));
        }
        for b in &colors[i + 1..] {
            if a.channel_distance(*b) < MIN_COLOR_DISTANCE {
                return Err(SynthError::InvalidData(format!("colours {a} and {b} are closer than {MIN_COLOR_DISTANCE}")));
            }
        }
    }
    Ok(())
}

/// Where a data value sits along a line-based mark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GtPoint {
    pub category: String,
    pub x: i32,
    /// Top edge of the series at `x`.
    pub y: i32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GtRegion {
    pub id: u32,
    pub role: Role,
    pub bbox: BBox,
    pub mask: Mask,
    pub label: String,
    pub color: Rgb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    /// Source table value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    /// Value as encoded by the mark (percent share on 100% stacks, pies and treemaps).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoded_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<GtPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GtText {
    pub text: String,
    pub bbox: BBox,
    pub role: Role,
}

/// Exact description of a rendered chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub schema_version: SchemaVersion,
    pub chart_id: String,
    /// SHA-256 of the rendered RGBA pixels.
    pub image_digest: String,
    pub spec: ChartSpec,
    pub regions: Vec<GtRegion>,
    pub text_elements: Vec<GtText>,
}

impl Document for GroundTruth {
    const SCHEMA: &'static str = "groundtruth.v1";
}

impl GroundTruth {
    pub fn data_marks(&self) -> impl Iterator<Item = &GtRegion> {
        self.regions.iter().filter(|r| r.role == Role::DataMark)
    }

    pub fn region(&self, id: u32) -> Option<&GtRegion> {
        self.regions.iter().find(|r| r.id == id)
    }

    /// The regions as the decomposition stages see them.
    pub fn region_refs(&self) -> Vec<crate::modelclient::RegionRef> {
        self.regions
            .iter()
            .map(|r| crate::modelclient::RegionRef {
                id: r.id,
                role: r.role,
                label: r.label.clone(),
                series: r.series.clone(),
                category: r.category.clone(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_is_separable() {
        check_distinct(&PALETTE).unwrap();
        check_distinct(&CLASS_COLORS).unwrap();
    }
}
