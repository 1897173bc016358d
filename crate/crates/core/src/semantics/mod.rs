//! Pixel regions to meaning: axis calibration, candidate regions, numbered
//! annotation, model labelling and value decoding.

mod annotate;
mod calibrate;
mod decode;

pub use annotate::{annotate_numbered, annotate_with_badges, layout_badges, Badge};
pub use calibrate::{axis_from_detection, axis_with_scale, calibrate_axis, parse_number, AxisCalibration, CalibError};
pub use decode::{decode_values, detected_axes};

use crate::doc::{Document, SchemaVersion};
use crate::model::{Axis, BBox, ImageSize, Mask, Orientation, Rgb, Role};
use crate::modelclient::{self, LabelRequest, ModelClient, ModelError, RegionCandidate};
use crate::raster::{self, Image};
use crate::regiondetect::{Detection, KindGuess};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, VecDeque};
use thiserror::Error;

/// A decoded position along a line-based mark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DecodedPoint {
    pub category: String,
    pub x: i32,
    pub y: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SemanticRegion {
    pub id: u32,
    pub bbox: BBox,
    pub mask: Mask,
    pub role: Role,
    pub label: String,
    /// What the classical stage took the region for.
    pub kind: KindGuess,
    pub color: Rgb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoded_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoded_x: Option<f64>,
    /// Mark area in pixels for size-encoded marks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoded_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<DecodedPoint>,
}

impl SemanticRegion {
    pub fn unlabeled(id: u32, mask: Mask, color: Rgb, kind: KindGuess, text: Option<String>) -> Self {
        SemanticRegion {
            id,
            bbox: mask.bbox().unwrap_or(BBox::point(0, 0)),
            mask,
            role: Role::Other,
            label: String::new(),
            kind,
            color,
            text,
            series: None,
            category: None,
            decoded_value: None,
            decoded_x: None,
            decoded_size: None,
            points: Vec::new(),
        }
    }

    pub fn is_text(&self) -> bool {
        self.kind == KindGuess::Text
    }
}

/// Labelled regions of one chart image with the axes they were decoded against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SemanticRegions {
    pub schema_version: SchemaVersion,
    pub image_size: ImageSize,
    pub source_digest: String,
    pub axes: Vec<Axis>,
    pub regions: Vec<SemanticRegion>,
}

impl Document for SemanticRegions {
    const SCHEMA: &'static str = "semantic_regions.v1";
}

impl SemanticRegions {
    pub fn region(&self, id: u32) -> Option<&SemanticRegion> {
        self.regions.iter().find(|r| r.id == id)
    }

    pub fn axis(&self, o: Orientation) -> Option<&Axis> {
        self.axes.iter().find(|a| a.orientation == o)
    }

    pub fn calibration(&self, o: Orientation) -> Option<AxisCalibration> {
        self.axis(o).filter(|a| a.is_quantitative()).and_then(|a| AxisCalibration::from_axis(a).ok())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SemanticsError {
    #[error("LABEL_MISSING({0})")]
    LabelMissing(u32),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl SemanticsError {
    pub fn code(&self) -> &'static str {
        match self {
            SemanticsError::LabelMissing(_) => "LABEL_MISSING",
            SemanticsError::Model(e) => e.code(),
        }
    }
}

fn components(pixels: &BTreeSet<(i32, i32)>) -> Vec<Vec<(i32, i32)>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &p in pixels {
        if !seen.insert(p) {
            continue;
        }
        let mut comp = vec![p];
        let mut queue = VecDeque::from([p]);
        while let Some((x, y)) = queue.pop_front() {
            for q in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
                if pixels.contains(&q) && seen.insert(q) {
                    comp.push(q);
                    queue.push_back(q);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Splits the dark axis component into the vertical line, the horizontal
/// line and one part per tick stroke.
fn split_axis_region(mask: &Mask, det: &Detection) -> Vec<(Mask, KindGuess)> {
    let mut rest: BTreeSet<(i32, i32)> = mask.pixels().collect();
    let mut parts = Vec::new();
    let mut order = det.axes.clone();
    order.sort_by_key(|a| a.orientation != Orientation::Vertical);
    for line in &order {
        let on: Vec<(i32, i32)> = rest
            .iter()
            .copied()
            .filter(|&(x, y)| match line.orientation {
                Orientation::Vertical => x == line.position && line.span.contains(y),
                Orientation::Horizontal => y == line.position && line.span.contains(x),
            })
            .collect();
        if on.is_empty() {
            continue;
        }
        for p in &on {
            rest.remove(p);
        }
        parts.push((Mask::from_pixels(on), KindGuess::AxisLine));
    }
    if parts.is_empty() {
        return vec![(mask.clone(), KindGuess::AxisLine)];
    }
    for comp in components(&rest) {
        parts.push((Mask::from_pixels(comp), KindGuess::Tick));
    }
    parts
}

/// Every region the labeller will see: colour regions (with the axis
/// component split into lines and ticks) and text elements, in reading
/// order with ids from 1.
pub fn candidates(det: &Detection) -> Vec<SemanticRegion> {
    let mut out: Vec<SemanticRegion> = Vec::new();
    for r in &det.regions {
        if r.kind_guess == KindGuess::AxisLine {
            for (mask, kind) in split_axis_region(&r.mask, det) {
                out.push(SemanticRegion::unlabeled(0, mask, r.dominant_color, kind, None));
            }
        } else {
            out.push(SemanticRegion::unlabeled(0, r.mask.clone(), r.dominant_color, r.kind_guess, None));
        }
    }
    for t in &det.text_elements {
        out.push(SemanticRegion::unlabeled(0, Mask::from_bbox(&t.bbox), Rgb::BLACK, KindGuess::Text, t.text.clone()));
    }
    out.sort_by_key(|r| (r.bbox.reading_key(), r.is_text(), r.mask.area()));
    for (i, r) in out.iter_mut().enumerate() {
        r.id = i as u32 + 1;
    }
    out
}

pub fn label_request(source: &Image, regions: &[SemanticRegion]) -> LabelRequest {
    LabelRequest {
        source_digest: raster::pixel_digest(source),
        regions: regions
            .iter()
            .map(|r| RegionCandidate { id: r.id, bbox: r.bbox, kind: r.kind, color: r.color, text: r.text.clone() })
            .collect(),
    }
}

/// Asks the model for a role and label for every region. The model sees the
/// chart with numbered badges drawn on it.
pub fn label_regions(source: &Image, mut regions: Vec<SemanticRegion>, model: &dyn ModelClient) -> Result<Vec<SemanticRegion>, SemanticsError> {
    let annotated = raster::encode_png(&annotate_numbered(source, &regions));
    let response = modelclient::label_regions(model, &annotated, &label_request(source, &regions))?;
    for r in &mut regions {
        let l = response.labels.iter().find(|l| l.id == r.id).ok_or(SemanticsError::LabelMissing(r.id))?;
        r.role = l.role;
        r.label = l.label.clone();
        r.series = l.series.clone();
        r.category = l.category.clone();
    }
    Ok(regions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelclient::{Capability, ModelRequest, ModelResponse};
    use crate::regiondetect::detect;
    use crate::synth::{render, TaskBank};

    struct Partial;
    impl ModelClient for Partial {
        fn backend_id(&self) -> String {
            "partial".into()
        }
        fn call(&self, req: &ModelRequest) -> Result<ModelResponse, ModelError> {
            assert_eq!(req.capability, Capability::LabelRegions);
            let labels: Vec<_> = req.payload["regions"]
                .as_array()
                .unwrap()
                .iter()
                .filter(|r| r["id"] != 7)
                .map(|r| serde_json::json!({"id": r["id"], "role": "other", "label": "x"}))
                .collect();
            Ok(ModelResponse { payload: serde_json::json!({ "labels": labels }), latency_ms: 0, backend: "partial".into() })
        }
    }

    #[test]
    fn missing_label_is_reported() {
        let bank = TaskBank::bundled();
        let (img, gt) = render(bank.chart("bar_basic").unwrap()).unwrap();
        let cands = candidates(&detect(&img, gt.spec.shape_class));
        let err = label_regions(&img, cands, &Partial).unwrap_err();
        assert_eq!(err, SemanticsError::LabelMissing(7));
        assert_eq!(err.code(), "LABEL_MISSING");
    }

    #[test]
    fn axis_component_is_split() {
        let bank = TaskBank::bundled();
        let (img, gt) = render(bank.chart("bar_basic").unwrap()).unwrap();
        let cands = candidates(&detect(&img, gt.spec.shape_class));
        let lines = cands.iter().filter(|c| c.kind == KindGuess::AxisLine).count();
        let ticks = cands.iter().filter(|c| c.kind == KindGuess::Tick).count();
        assert_eq!(lines, 2);
        assert_eq!(ticks, gt.regions.iter().filter(|r| r.role == Role::Tick).count());
        for (i, c) in cands.iter().enumerate() {
            assert_eq!(c.id, i as u32 + 1);
        }
    }
}
