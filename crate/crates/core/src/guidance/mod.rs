//! Per-subtask visual guidance: which regions to highlight, which reference
//! lines and markers to draw, and the rendered overlay.

use crate::decompose::{ExecTrace, Subtask, TaskType};
use crate::doc::{Document, SchemaVersion};
use crate::font;
use crate::model::{BBox, ChartSpec, Mask, Orientation, Rgb, Role};
use crate::modelclient::{self, ModelClient, ModelError, PhraseRequest};
use crate::raster::{self, Image};
use crate::semantics::{SemanticRegion, SemanticRegions};
use crate::workflow::Workflow;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

pub const ACCENT: Rgb = Rgb([235, 110, 0]);
pub const HIGHLIGHT_WIDTH: u32 = 2;
pub const HIGHLIGHT_TINT: f64 = 0.25;
pub const DIM_OPACITY: f64 = 0.6;
pub const LINE_WIDTH: u32 = 1;
const MARKER_OUTER: f64 = 7.0;
const MARKER_INNER: f64 = 4.5;
const CALLOUT_PAD: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub fn new(x: i32, y: i32) -> Self {
        Point { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Style {
    pub stroke: Rgb,
    pub width: u32,
    pub fill_opacity: f64,
}

impl Style {
    pub const HIGHLIGHT: Style = Style { stroke: ACCENT, width: HIGHLIGHT_WIDTH, fill_opacity: HIGHLIGHT_TINT };
    pub const LINE: Style = Style { stroke: ACCENT, width: LINE_WIDTH, fill_opacity: 0.0 };
    pub const CALLOUT: Style = Style { stroke: ACCENT, width: 1, fill_opacity: DIM_OPACITY };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Shape {
    HighlightRegion { region_id: u32 },
    ReferenceLine { from: Point, to: Point },
    Marker { at: Point },
    /// A text label; regions in `dim` are washed out so the rest stands out.
    Callout {
        text: String,
        anchor: Point,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        dim: Vec<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct OverlayPrimitive {
    pub shape: Shape,
    pub style: Style,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GuidanceStep {
    pub schema_version: SchemaVersion,
    pub subtask_id: u32,
    pub task_type: TaskType,
    pub instruction: String,
    pub primitives: Vec<OverlayPrimitive>,
}

impl Document for GuidanceStep {
    const SCHEMA: &'static str = "guidance.v1";
}

impl GuidanceStep {
    pub fn highlighted(&self) -> BTreeSet<u32> {
        self.primitives
            .iter()
            .filter_map(|p| match p.shape {
                Shape::HighlightRegion { region_id } => Some(region_id),
                _ => None,
            })
            .collect()
    }

    pub fn reference_lines(&self) -> Vec<(Point, Point)> {
        self.primitives
            .iter()
            .filter_map(|p| match p.shape {
                Shape::ReferenceLine { from, to } => Some((from, to)),
                _ => None,
            })
            .collect()
    }

    pub fn markers(&self) -> Vec<Point> {
        self.primitives
            .iter()
            .filter_map(|p| match p.shape {
                Shape::Marker { at } => Some(at),
                _ => None,
            })
            .collect()
    }

    /// Region ids referenced by any primitive.
    pub fn referenced(&self) -> BTreeSet<u32> {
        let mut ids = self.highlighted();
        for p in &self.primitives {
            if let Shape::Callout { dim, .. } = &p.shape {
                ids.extend(dim.iter().copied());
            }
        }
        ids
    }

    /// Structural checks: at least one primitive, an instruction, points in
    /// bounds and referenced regions present.
    pub fn check(&self, regions: &SemanticRegions) -> Result<(), String> {
        if self.primitives.is_empty() {
            return Err("no primitives".into());
        }
        if self.instruction.trim().is_empty() {
            return Err("empty instruction".into());
        }
        let (w, h) = (regions.image_size.width as i32, regions.image_size.height as i32);
        let inside = |p: &Point| (0..w).contains(&p.x) && (0..h).contains(&p.y);
        for p in &self.primitives {
            let ok = match &p.shape {
                Shape::ReferenceLine { from, to } => inside(from) && inside(to),
                Shape::Marker { at } => inside(at),
                Shape::Callout { anchor, .. } => inside(anchor),
                Shape::HighlightRegion { .. } => true,
            };
            if !ok {
                return Err(format!("primitive out of bounds: {:?}", p.shape));
            }
        }
        match self.referenced().into_iter().find(|id| regions.region(*id).is_none()) {
            Some(id) => Err(format!("region {id} does not exist")),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GuidanceError {
    #[error("GUIDANCE_UNGROUNDED: subtask {subtask} targets missing region {region}")]
    Ungrounded { subtask: u32, region: u32 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl GuidanceError {
    pub fn code(&self) -> &'static str {
        match self {
            GuidanceError::Ungrounded { .. } => "GUIDANCE_UNGROUNDED",
            GuidanceError::Model(e) => e.code(),
        }
    }
}

fn highlight(region_id: u32) -> OverlayPrimitive {
    OverlayPrimitive { shape: Shape::HighlightRegion { region_id }, style: Style::HIGHLIGHT }
}

fn line(from: Point, to: Point) -> OverlayPrimitive {
    OverlayPrimitive { shape: Shape::ReferenceLine { from, to }, style: Style::LINE }
}

fn marker(at: Point) -> OverlayPrimitive {
    OverlayPrimitive { shape: Shape::Marker { at }, style: Style::LINE }
}

fn callout(text: &str, anchor: Point, dim: Vec<u32>) -> OverlayPrimitive {
    OverlayPrimitive { shape: Shape::Callout { text: text.into(), anchor, dim }, style: Style::CALLOUT }
}

/// Text the bundled font can draw.
fn printable(text: &str) -> String {
    text.to_ascii_uppercase().chars().map(|c| if font::supports(c) { c } else { ' ' }).collect()
}

struct Planner<'a> {
    sub: &'a Subtask,
    regions: &'a SemanticRegions,
    targets: Vec<&'a SemanticRegion>,
    out: Vec<OverlayPrimitive>,
}

impl<'a> Planner<'a> {
    fn clamp(&self, x: i32, y: i32) -> Point {
        let s = self.regions.image_size;
        Point::new(x.clamp(0, s.width as i32 - 1), y.clamp(0, s.height as i32 - 1))
    }

    fn param(&self, k: &str) -> Option<&str> {
        self.sub.params.get(k).map(String::as_str)
    }

    fn highlight_targets(&mut self) {
        let ids: Vec<u32> = self.targets.iter().map(|r| r.id).collect();
        self.out.extend(ids.into_iter().map(highlight));
    }

    /// Point on `r` that stands for the (series, category) datum.
    fn anchor(&self, r: &SemanticRegion, category: Option<&str>) -> Point {
        if let Some(p) = category.and_then(|c| r.points.iter().find(|p| p.category == c)) {
            return self.clamp(p.x, p.y.round() as i32);
        }
        if r.points.is_empty() && r.decoded_x.is_none() && r.mask.area() as i64 == r.bbox.area() {
            return self.clamp((r.bbox.x_min + r.bbox.x_max) / 2, r.bbox.y_min);
        }
        let (cx, cy) = r.mask.centroid().unwrap_or(r.bbox.center());
        self.clamp(cx.round() as i32, cy.round() as i32)
    }

    fn axis_labels_near(&self, o: Orientation, along: i32) -> Option<u32> {
        let axis = self.regions.axis(o)?;
        self.regions
            .regions
            .iter()
            .filter(|r| r.role == Role::AxisLabel)
            .filter(|r| match o {
                Orientation::Vertical => r.bbox.x_max < axis.position,
                Orientation::Horizontal => r.bbox.y_min > axis.position,
            })
            .min_by_key(|r| {
                let (cx, cy) = r.bbox.center();
                let d = match o {
                    Orientation::Vertical => cy - f64::from(along),
                    Orientation::Horizontal => cx - f64::from(along),
                };
                ((d.abs() * 2.0) as i64, r.id)
            })
            .map(|r| r.id)
    }

    fn retrieve(&mut self) {
        self.highlight_targets();
        let category = self.param("category").map(str::to_owned);
        let to_x = self.param("field") == Some("x");
        let mut labels = BTreeSet::new();
        for r in self.targets.clone() {
            if r.role != Role::DataMark {
                continue;
            }
            let cats: Vec<Option<String>> = match (&category, r.points.is_empty()) {
                (Some(c), _) => crate::decompose::split_list(c).into_iter().map(Some).collect(),
                (None, false) => r.points.iter().map(|p| Some(p.category.clone())).collect(),
                (None, true) => vec![None],
            };
            for c in cats {
                let a = self.anchor(r, c.as_deref());
                if to_x {
                    if let Some(axis) = self.regions.axis(Orientation::Horizontal) {
                        let from = self.clamp(a.x, if r.points.is_empty() { r.bbox.y_max } else { a.y });
                        self.out.push(line(from, self.clamp(a.x, axis.position)));
                        labels.extend(self.axis_labels_near(Orientation::Horizontal, a.x));
                    }
                } else if let Some(axis) = self.regions.axis(Orientation::Vertical) {
                    let x = if r.points.is_empty() && r.decoded_x.is_none() { r.bbox.x_min } else { a.x };
                    self.out.push(line(self.clamp(x, a.y), self.clamp(axis.position, a.y)));
                    labels.extend(self.axis_labels_near(Orientation::Vertical, a.y));
                } else if let Some(v) = r.decoded_value {
                    let text = format!("{}", (v * 10.0).round() / 10.0);
                    self.out.push(callout(&text, a, Vec::new()));
                }
            }
        }
        self.out.extend(labels.into_iter().map(highlight));
    }

    fn filter(&mut self) {
        self.highlight_targets();
        let kept: BTreeSet<u32> = self.targets.iter().map(|r| r.id).collect();
        let dim: Vec<u32> = self
            .regions
            .regions
            .iter()
            .filter(|r| r.role == Role::DataMark && !kept.contains(&r.id))
            .map(|r| r.id)
            .collect();
        let what = ["series", "category", "above", "below"].iter().find_map(|k| self.param(k)).unwrap_or("SELECTION");
        let anchor = self.top_left_of_targets();
        self.out.push(callout(&printable(what), anchor, dim));
    }

    fn top_left_of_targets(&self) -> Point {
        let b = self.targets.iter().map(|r| r.bbox).reduce(|a, b| a.union(&b)).unwrap_or(BBox::point(0, 0));
        self.clamp(b.x_min, b.y_min - font::GLYPH_H - 2 * CALLOUT_PAD - 2)
    }

    /// The mark and category holding a step's single result row.
    fn result_point(&self, trace: Option<&ExecTrace>) -> Option<Point> {
        let row = trace?.step(self.sub.id)?.rows.first()?;
        let r = self.targets.iter().find(|r| {
            let series_ok = row.series.is_none() || r.series == row.series;
            let cat_ok = match (&row.category, &r.category) {
                (Some(c), Some(rc)) => c == rc,
                (Some(c), None) => r.points.iter().any(|p| &p.category == c),
                (None, _) => true,
            };
            r.role == Role::DataMark && series_ok && cat_ok
        })?;
        Some(self.anchor(r, row.category.as_deref()))
    }

    /// Marker on the target with the largest (or smallest) decoded value.
    fn decoded_extremum(&self) -> Option<Point> {
        let min = self.param("op") == Some("min");
        let mut best: Option<(f64, Point)> = None;
        for r in self.targets.iter().filter(|r| r.role == Role::DataMark) {
            let mut cands: Vec<(f64, Option<&str>)> = r.points.iter().map(|p| (p.value, Some(p.category.as_str()))).collect();
            if let Some(v) = r.decoded_value {
                cands.push((v, None));
            }
            for (v, c) in cands {
                if best.is_none_or(|(b, _)| if min { v < b } else { v > b }) {
                    best = Some((v, self.anchor(r, c)));
                }
            }
        }
        best.map(|b| b.1)
    }

    fn extremum(&mut self, trace: Option<&ExecTrace>) {
        self.highlight_targets();
        if let Some(p) = self.result_point(trace).or_else(|| self.decoded_extremum()) {
            self.out.push(marker(p));
        }
    }

    fn summary(&mut self, text: &str) {
        self.highlight_targets();
        if self.targets.is_empty() {
            let axis_name = self.param("axis").map(str::to_owned);
            let axis = self.regions.axes.iter().find(|a| Some(&a.name) == axis_name.as_ref()).or(self.regions.axes.first());
            if let Some(axis) = axis {
                let ids: Vec<u32> = self
                    .regions
                    .regions
                    .iter()
                    .filter(|r| r.role == Role::AxisLabel)
                    .filter(|r| match axis.orientation {
                        Orientation::Vertical => r.bbox.x_max < axis.position,
                        Orientation::Horizontal => r.bbox.y_min > axis.position,
                    })
                    .map(|r| r.id)
                    .collect();
                self.out.extend(ids.into_iter().map(highlight));
            }
        }
        let anchor = self.top_left_of_targets();
        self.out.push(callout(text, anchor, Vec::new()));
    }
}

/// Plans the overlay for one subtask. Geometry comes from region coordinates;
/// `trace` (when given) pins extremum markers to the computed result and
/// `model` (when given) rephrases the instruction.
pub fn plan_guidance(
    sub: &Subtask,
    regions: &SemanticRegions,
    _spec: &ChartSpec,
    trace: Option<&ExecTrace>,
    model: Option<&dyn ModelClient>,
) -> Result<GuidanceStep, GuidanceError> {
    let mut targets = Vec::new();
    for id in &sub.target_region_ids {
        let r = regions.region(*id).ok_or(GuidanceError::Ungrounded { subtask: sub.id, region: *id })?;
        targets.push(r);
    }
    let instruction = match model {
        Some(m) => {
            let req = PhraseRequest { task_type: sub.task_type.as_str().into(), instruction: sub.instruction.clone() };
            modelclient::phrase_instruction(m, &req)?.instruction
        }
        None => sub.instruction.clone(),
    };
    let mut p = Planner { sub, regions, targets, out: Vec::new() };
    match sub.task_type {
        TaskType::RetrieveValue => p.retrieve(),
        TaskType::Filter => p.filter(),
        TaskType::FindExtremum => p.extremum(trace),
        TaskType::DetermineRange => {
            p.highlight_targets();
            let op = p.sub.params.clone();
            let mut s = p.sub.clone();
            for o in ["max", "min"] {
                s.params = op.clone();
                s.params.insert("op".into(), o.into());
                let q = Planner { sub: &s, regions, targets: p.targets.clone(), out: Vec::new() };
                if let Some(m) = q.decoded_extremum() {
                    p.out.push(marker(m));
                }
            }
        }
        TaskType::ComputeDerivedValue => {
            let op = p.param("op").unwrap_or("compute").to_owned();
            p.summary(&printable(&op));
        }
        TaskType::Sort => p.summary("SORT"),
        TaskType::CharacterizeDistribution => p.summary("SHAPE"),
        TaskType::FindAnomalies => p.summary("OUTLIERS"),
        TaskType::Cluster => p.summary("GROUPS"),
        TaskType::Correlate => p.summary("TREND"),
    }
    if p.out.is_empty() {
        let anchor = p.top_left_of_targets();
        p.out.push(callout(&printable(sub.task_type.as_str()), anchor, Vec::new()));
    }
    Ok(GuidanceStep { schema_version: SchemaVersion, subtask_id: sub.id, task_type: sub.task_type, instruction, primitives: p.out })
}

/// Guidance for every node of `wf` in execution order.
pub fn plan_workflow(
    wf: &Workflow,
    regions: &SemanticRegions,
    spec: &ChartSpec,
    trace: Option<&ExecTrace>,
    model: Option<&dyn ModelClient>,
) -> Result<Vec<GuidanceStep>, GuidanceError> {
    wf.order
        .iter()
        .filter_map(|id| wf.node(*id))
        .map(|s| plan_guidance(s, regions, spec, trace, model))
        .collect()
}

fn ring(cx: i32, cy: i32) -> Mask {
    raster::disk(cx, cy, MARKER_OUTER).difference(&raster::disk(cx, cy, MARKER_INNER))
}

fn thick_line(from: Point, to: Point, width: u32) -> Mask {
    let half = (width as i32 - 1) / 2;
    raster::thick_polyline(&[(from.x, from.y), (to.x, to.y)], half)
}

/// Pixels of a highlight stroke: the region's boundary plus, for width 2,
/// the ring just outside it.
fn stroke_of(mask: &Mask, width: u32) -> Mask {
    let mut m = mask.boundary();
    let mut outer = mask.clone();
    for _ in 1..width {
        let ring = outer.outer_ring();
        m = m.union(&ring);
        outer = outer.union(&ring);
    }
    m
}

fn callout_box(text: &str, anchor: Point, w: i32, h: i32) -> (BBox, i32, i32) {
    let tw = font::ink_width(text, 1).max(1) + 2 * CALLOUT_PAD;
    let th = font::GLYPH_H + 2 * CALLOUT_PAD;
    let x0 = anchor.x.clamp(0, (w - tw).max(0));
    let y0 = anchor.y.clamp(0, (h - th).max(0));
    (BBox::new(x0, (x0 + tw - 1).min(w - 1), y0, (y0 + th - 1).min(h - 1)), x0 + CALLOUT_PAD, y0 + CALLOUT_PAD)
}

/// Every pixel `step` may change.
pub fn footprint(step: &GuidanceStep, regions: &SemanticRegions) -> Mask {
    let (w, h) = (regions.image_size.width as i32, regions.image_size.height as i32);
    let mut m = Mask::new();
    for p in &step.primitives {
        let part = match &p.shape {
            Shape::HighlightRegion { region_id } => match regions.region(*region_id) {
                Some(r) => r.mask.union(&stroke_of(&r.mask, p.style.width)),
                None => Mask::new(),
            },
            Shape::ReferenceLine { from, to } => thick_line(*from, *to, p.style.width),
            Shape::Marker { at } => ring(at.x, at.y),
            Shape::Callout { text, anchor, dim } => {
                let mut c = Mask::from_bbox(&callout_box(&printable(text), *anchor, w, h).0);
                for id in dim {
                    if let Some(r) = regions.region(*id) {
                        c = c.union(&r.mask);
                    }
                }
                c
            }
        };
        m = m.union(&part);
    }
    m.clip(&BBox::new(0, w - 1, 0, h - 1))
}

/// Draws `step` over `img`. Dims go first, then highlight tints and strokes,
/// lines, markers and callout boxes. Pure: the same inputs give the same pixels.
pub fn render_overlay(img: &Image, step: &GuidanceStep, regions: &SemanticRegions) -> Image {
    let mut out = img.clone();
    let highlighted: Mask = step
        .highlighted()
        .iter()
        .filter_map(|id| regions.region(*id))
        .fold(Mask::new(), |m, r| m.union(&r.mask));
    for p in &step.primitives {
        if let Shape::Callout { dim, .. } = &p.shape {
            for r in dim.iter().filter_map(|id| regions.region(*id)) {
                for (x, y) in r.mask.difference(&highlighted).pixels() {
                    raster::blend(&mut out, x, y, Rgb::WHITE, p.style.fill_opacity);
                }
            }
        }
    }
    for p in &step.primitives {
        if let Shape::HighlightRegion { region_id } = p.shape {
            let Some(r) = regions.region(region_id) else { continue };
            raster::blend_mask(&mut out, &r.mask, p.style.stroke, p.style.fill_opacity);
            raster::paint_mask(&mut out, &stroke_of(&r.mask, p.style.width), p.style.stroke);
        }
    }
    for p in &step.primitives {
        match &p.shape {
            Shape::ReferenceLine { from, to } => raster::paint_mask(&mut out, &thick_line(*from, *to, p.style.width), p.style.stroke),
            Shape::Marker { at } => raster::paint_mask(&mut out, &ring(at.x, at.y), p.style.stroke),
            _ => {}
        }
    }
    let (w, h) = (out.width() as i32, out.height() as i32);
    for p in &step.primitives {
        if let Shape::Callout { text, anchor, .. } = &p.shape {
            let text = printable(text);
            let (b, tx, ty) = callout_box(&text, *anchor, w, h);
            raster::paint_mask(&mut out, &Mask::from_bbox(&b), Rgb::WHITE);
            raster::paint_mask(&mut out, &Mask::from_bbox(&b).boundary(), p.style.stroke);
            for (x, y) in font::rasterize(&text, 1) {
                raster::put(&mut out, tx + x, ty + y, Rgb::BLACK);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::{execute, rule_decompose, DataTable};
    use crate::modelclient::MockModel;
    use crate::pipeline::{analyze, Analysis};
    use crate::synth::{render, TaskBank};

    fn analysed(chart: &str) -> (Image, Analysis, MockModel) {
        let bank = TaskBank::bundled();
        let (img, gt) = render(bank.chart(chart).unwrap()).unwrap();
        let mock = MockModel::new([gt]);
        let a = analyze(&raster::encode_png(&img), &mock).unwrap();
        (img, a, mock)
    }

    fn sub(id: u32, t: TaskType, targets: Vec<u32>, params: &[(&str, &str)]) -> Subtask {
        Subtask {
            id,
            task_type: t,
            instruction: "look".into(),
            target_region_ids: targets,
            params: params.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            deps: Vec::new(),
        }
    }

    #[test]
    fn retrieve_value_line_runs_from_bar_top_to_axis() {
        let (_, a, _) = analysed("bar_basic");
        let bar = a.regions.regions.iter().find(|r| r.role == Role::DataMark).unwrap();
        let step = plan_guidance(&sub(1, TaskType::RetrieveValue, vec![bar.id], &[]), &a.regions, &a.spec, None, None).unwrap();
        let axis_x = a.regions.axis(Orientation::Vertical).unwrap().position;
        assert_eq!(step.reference_lines(), vec![(Point::new(bar.bbox.x_min, bar.bbox.y_min), Point::new(axis_x, bar.bbox.y_min))]);
        let labels: Vec<_> = step.highlighted().into_iter().filter(|id| *id != bar.id).collect();
        assert_eq!(labels.len(), 1);
        assert_eq!(a.regions.region(labels[0]).unwrap().role, Role::AxisLabel);
    }

    #[test]
    fn missing_target_is_ungrounded() {
        let (_, a, _) = analysed("bar_basic");
        let err = plan_guidance(&sub(3, TaskType::Filter, vec![9999], &[]), &a.regions, &a.spec, None, None).unwrap_err();
        assert_eq!(err.code(), "GUIDANCE_UNGROUNDED");
    }

    #[test]
    fn olympic_filter_highlights_the_gold_segments() {
        let (_, a, _) = analysed("olympic");
        let gold: BTreeSet<u32> = a
            .regions
            .regions
            .iter()
            .filter(|r| r.role == Role::DataMark && r.series.as_deref() == Some("GOLD"))
            .map(|r| r.id)
            .collect();
        assert_eq!(gold.len(), 4);
        let s = sub(1, TaskType::Filter, gold.iter().copied().collect(), &[("series", "GOLD")]);
        let step = plan_guidance(&s, &a.regions, &a.spec, None, None).unwrap();
        assert_eq!(step.highlighted(), gold);
    }

    #[test]
    fn rendering_is_local_and_deterministic() {
        let (img, a, _) = analysed("bar_basic");
        let bar = a.regions.regions.iter().find(|r| r.role == Role::DataMark).unwrap();
        let step = GuidanceStep {
            schema_version: SchemaVersion,
            subtask_id: 1,
            task_type: TaskType::Filter,
            instruction: "x".into(),
            primitives: vec![highlight(bar.id)],
        };
        let once = render_overlay(&img, &step, &a.regions);
        assert_eq!(raster::encode_png(&once), raster::encode_png(&render_overlay(&img, &step, &a.regions)));
        let changed = raster::diff_mask(&img, &once);
        assert!(!changed.is_empty());
        assert_eq!(changed.difference(&footprint(&step, &a.regions)).area(), 0);
    }

    #[test]
    fn reference_line_endpoints_are_drawn() {
        let (img, a, _) = analysed("bar_basic");
        let bar = a.regions.regions.iter().find(|r| r.role == Role::DataMark).unwrap();
        let step = plan_guidance(&sub(1, TaskType::RetrieveValue, vec![bar.id], &[]), &a.regions, &a.spec, None, None).unwrap();
        let out = render_overlay(&img, &step, &a.regions);
        for (from, to) in step.reference_lines() {
            assert_eq!(raster::rgb_at(&out, from.x, from.y), ACCENT);
            assert_eq!(raster::rgb_at(&out, to.x, to.y), ACCENT);
        }
    }

    #[test]
    fn every_workflow_step_is_planned_and_contained() {
        let (_, a, mock) = analysed("olympic");
        let bank = TaskBank::bundled();
        let task = bank.tasks.iter().find(|t| t.chart_id == "olympic").unwrap();
        let dec = rule_decompose(&task.question, &a.spec, &crate::decompose::region_refs(&a.regions.regions)).unwrap();
        let table = DataTable::from_regions(&a.regions.regions, &a.vocabulary().categories);
        let trace = execute(&dec, &table).unwrap();
        let wf = Workflow::build(&dec, a.vocabulary());
        let steps = plan_workflow(&wf, &a.regions, &a.spec, Some(&trace), Some(&mock)).unwrap();
        assert_eq!(steps.len(), 4);
        for (s, st) in wf.order.iter().zip(&steps) {
            st.check(&a.regions).unwrap();
            let targets: BTreeSet<u32> = wf.node(*s).unwrap().target_region_ids.iter().copied().collect();
            for id in st.highlighted() {
                assert!(targets.contains(&id) || a.regions.region(id).unwrap().role.is_axis_context(), "{id}");
            }
        }
        assert_eq!(steps.last().unwrap().markers().len(), 1);
    }
}
