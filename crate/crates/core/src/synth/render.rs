use super::layout::{nice_axis, NiceAxis};
use super::{validate_data, DataSpec, GroundTruth, GtPoint, GtRegion, GtText, SynthError, CLASS_COLORS};
use crate::doc::SchemaVersion;
use crate::font;
use crate::model::{
    classify_shape, Axis, BBox, Channel, ChartSpec, ChartType, ImageSize, Mask, Orientation, Rgb, Role, Run, Scale,
    SeriesEncoding, Span, Tick, TickValue,
};
use crate::raster::{self, Image};
use crate::regiondetect;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

const TITLE_Y: i32 = 16;
const LEGEND_Y: i32 = 56;
const SWATCH: i32 = 14;
const LEGEND_LABEL_DX: i32 = 20;
const LEGEND_SPACING: i32 = 28;
const TICK_LEN: i32 = 5;
const YLABEL_GAP: i32 = 9;
const XLABEL_DY: i32 = 12;
const XTITLE_DY: i32 = 50;
const MIN_MARK_AREA: i64 = 16;
const LINE_HALF_WIDTH: i32 = 1;
const DOT_RADIUS: f64 = 5.0;
const BUBBLE_MAX_RADIUS: f64 = 30.0;
const BUBBLE_MIN_RADIUS: f64 = 4.0;
const PIE_RADIUS: f64 = 170.0;
const PIE_CENTER_Y: i32 = 340;
const MAP_JITTER: i32 = 20;
/// Inset of the first tick of a quantitative x axis from the y-axis line.
const QX_INSET: i32 = 40;

enum Slot {
    Region(Box<GtRegion>),
    Text { text: String, role: Role, bbox: BBox },
}

struct Canvas {
    w: i32,
    h: i32,
    scale: i32,
    owner: Vec<u32>,
    slots: Vec<(Rgb, Slot)>,
}

fn region(role: Role, label: String, color: Rgb) -> GtRegion {
    GtRegion {
        id: 0,
        role,
        bbox: BBox::point(0, 0),
        mask: Mask::new(),
        label,
        color,
        series: None,
        category: None,
        value: None,
        encoded_value: None,
        x_value: None,
        size_value: None,
        points: Vec::new(),
    }
}

impl Canvas {
    fn new(w: i32, h: i32, scale: i32) -> Self {
        Canvas { w, h, scale, owner: vec![0; (w * h) as usize], slots: Vec::new() }
    }

    fn add(&mut self, r: GtRegion) -> u32 {
        self.slots.push((r.color, Slot::Region(Box::new(r))));
        self.slots.len() as u32
    }

    fn set(&mut self, id: u32, x: i32, y: i32) {
        if x >= 0 && y >= 0 && x < self.w && y < self.h {
            self.owner[(y * self.w + x) as usize] = id;
        }
    }

    fn paint(&mut self, id: u32, mask: &Mask) {
        for (x, y) in mask.pixels() {
            self.set(id, x, y);
        }
    }

    fn rect(&mut self, id: u32, x0: i32, x1: i32, y0: i32, y1: i32) {
        for y in y0..=y1 {
            for x in x0..=x1 {
                self.set(id, x, y);
            }
        }
    }

    /// Draws text whose ink box starts at (x_ink, y_ink).
    fn text(&mut self, text: &str, role: Role, x_ink: i32, y_ink: i32) -> BBox {
        let origin = x_ink - font::ink_offset(text, self.scale);
        let ink = font::ink_bbox(text, self.scale).expect("labels are never blank");
        let bbox = ink.translate(origin, y_ink);
        self.slots.push((Rgb::BLACK, Slot::Text { text: text.to_owned(), role, bbox }));
        let id = self.slots.len() as u32;
        for (x, y) in font::rasterize(text, self.scale) {
            self.set(id, x + origin, y + y_ink);
        }
        bbox
    }

    fn text_right(&mut self, text: &str, role: Role, x_ink_max: i32, y_ink: i32) -> BBox {
        let w = font::ink_width(text, self.scale) - font::ink_offset(text, self.scale);
        self.text(text, role, x_ink_max - w + 1, y_ink)
    }

    fn text_center(&mut self, text: &str, role: Role, cx: f64, y_ink: i32) -> BBox {
        let w = font::ink_width(text, self.scale) - font::ink_offset(text, self.scale);
        self.text(text, role, (cx - f64::from(w) / 2.0).round() as i32, y_ink)
    }

    fn text_height(&self) -> i32 {
        font::GLYPH_H * self.scale
    }

    fn masks(&self) -> Vec<Mask> {
        let mut runs: Vec<Vec<Run>> = vec![Vec::new(); self.slots.len() + 1];
        for y in 0..self.h {
            let row = &self.owner[(y * self.w) as usize..((y + 1) * self.w) as usize];
            let mut x = 0;
            while x < self.w {
                let id = row[x as usize];
                let start = x;
                while x < self.w && row[x as usize] == id {
                    x += 1;
                }
                if id != 0 {
                    runs[id as usize].push(Run { y, x0: start, x1: x - 1 });
                }
            }
        }
        runs.into_iter().map(Mask::from_runs).collect()
    }
}

/// Pixel geometry of the plot area.
#[derive(Clone, Copy)]
struct Plot {
    ax: i32,
    right: i32,
    top: i32,
    ay: i32,
}

impl Plot {
    fn ypix(&self, a: &NiceAxis, v: f64) -> f64 {
        f64::from(self.ay) - (v - a.lo) / (a.hi - a.lo) * f64::from(self.ay - self.top)
    }

    fn xpix(&self, a: &NiceAxis, v: f64) -> f64 {
        let x0 = self.ax + QX_INSET;
        f64::from(x0) + (v - a.lo) / (a.hi - a.lo) * f64::from(self.right - x0)
    }

    fn band(&self, n: usize) -> f64 {
        f64::from(self.right - self.ax) / n as f64
    }

    fn center(&self, n: usize, i: usize) -> f64 {
        f64::from(self.ax) + self.band(n) * (i as f64 + 0.5)
    }
}

fn fmt_value(v: f64, suffix: &str) -> String {
    format!("{}{suffix}", v.round() as i64)
}

fn overflow(msg: impl Into<String>) -> SynthError {
    SynthError::RenderOverflow(msg.into())
}

struct Ctx<'a> {
    d: &'a DataSpec,
    c: Canvas,
    plot: Plot,
    axes: Vec<Axis>,
}

impl Ctx<'_> {
    fn title(&mut self) {
        let w = f64::from(self.c.w);
        let t = self.d.title.clone();
        self.c.text_center(&t, Role::Title, w / 2.0, TITLE_Y);
    }

    /// Horizontal legend row; each entry gets a swatch region and a label.
    fn legend(&mut self, entries: Vec<(String, GtRegion)>) -> Result<(), SynthError> {
        let mut x = self.plot.ax;
        for (text, swatch) in entries {
            let id = self.c.add(swatch);
            self.c.rect(id, x, x + SWATCH - 1, LEGEND_Y, LEGEND_Y + SWATCH - 1);
            let b = self.c.text(&text, Role::LegendLabel, x + LEGEND_LABEL_DX, LEGEND_Y);
            x = b.x_max + LEGEND_SPACING;
        }
        if x - LEGEND_SPACING >= self.c.w - 10 {
            return Err(overflow("legend does not fit in one row"));
        }
        Ok(())
    }

    fn series_legend(&mut self, colors: &[Rgb]) -> Result<(), SynthError> {
        let entries = self
            .d
            .series
            .iter()
            .zip(colors)
            .map(|(s, &c)| {
                let mut r = region(Role::LegendSwatch, format!("Legend key for {}", s.describe()), c);
                r.series = Some(s.name.clone());
                (s.name.clone(), r)
            })
            .collect();
        self.legend(entries)
    }

    fn category_legend(&mut self, colors: &[Rgb]) -> Result<(), SynthError> {
        let entries = self
            .d
            .categories
            .iter()
            .zip(colors)
            .map(|(k, &c)| {
                let mut r = region(Role::LegendSwatch, format!("Legend key for {}", k.describe()), c);
                r.category = Some(k.name.clone());
                (k.name.clone(), r)
            })
            .collect();
        self.legend(entries)
    }

    fn axis_lines(&mut self) {
        let p = self.plot;
        let xl = self.c.add(region(Role::Other, format!("{} axis line", self.d.x_name), Rgb::BLACK));
        self.c.rect(xl, p.ax + 1, p.right, p.ay, p.ay);
        let yl = self.c.add(region(Role::Other, format!("{} axis line", self.d.y_name), Rgb::BLACK));
        self.c.rect(yl, p.ax, p.ax, p.top, p.ay);
    }

    fn y_axis(&mut self, a: &NiceAxis, suffix: &str) {
        let p = self.plot;
        let h = self.c.text_height();
        let mut ticks = Vec::new();
        for v in a.ticks() {
            let py = p.ypix(a, v).round() as i32;
            let label = fmt_value(v, suffix);
            let id = self.c.add(region(Role::Tick, format!("{} tick at {label}", self.d.y_name), Rgb::BLACK));
            self.c.rect(id, p.ax - TICK_LEN, p.ax - 1, py, py);
            self.c.text_right(&label, Role::AxisLabel, p.ax - YLABEL_GAP, py - h / 2);
            ticks.push(Tick { pixel: py, value: TickValue::Number(v) });
        }
        self.axes.push(Axis {
            name: self.d.y_name.clone(),
            orientation: Orientation::Vertical,
            scale: Scale::LinearQuantitative,
            ticks,
            pixel_span: Span { min: p.top, max: p.ay },
            position: p.ax,
        });
    }

    fn x_tick(&mut self, x: i32, label: &str) {
        let p = self.plot;
        let id = self.c.add(region(Role::Tick, format!("{} tick at {label}", self.d.x_name), Rgb::BLACK));
        self.c.rect(id, x, x, p.ay + 1, p.ay + TICK_LEN);
        self.c.text_center(label, Role::AxisLabel, f64::from(x), p.ay + XLABEL_DY);
    }

    fn x_title(&mut self) {
        let p = self.plot;
        let name = self.d.x_name.clone();
        self.c.text_center(&name, Role::AxisTitle, f64::from(p.ax + p.right) / 2.0, p.ay + XTITLE_DY);
    }

    fn x_categorical(&mut self) -> Vec<i32> {
        let p = self.plot;
        let n = self.d.categories.len();
        let mut ticks = Vec::new();
        let mut centers = Vec::new();
        for i in 0..n {
            let cx = p.center(n, i).round() as i32;
            let name = self.d.categories[i].name.clone();
            self.x_tick(cx, &name);
            ticks.push(Tick { pixel: cx, value: TickValue::Category(name) });
            centers.push(cx);
        }
        self.axes.insert(
            0,
            Axis {
                name: self.d.x_name.clone(),
                orientation: Orientation::Horizontal,
                scale: Scale::Categorical,
                ticks,
                pixel_span: Span { min: p.ax, max: p.right },
                position: p.ay,
            },
        );
        self.x_title();
        centers
    }

    fn x_quantitative(&mut self, a: &NiceAxis) {
        let p = self.plot;
        let mut ticks = Vec::new();
        for v in a.ticks() {
            let px = p.xpix(a, v).round() as i32;
            self.x_tick(px, &fmt_value(v, ""));
            ticks.push(Tick { pixel: px, value: TickValue::Number(v) });
        }
        self.axes.insert(
            0,
            Axis {
                name: self.d.x_name.clone(),
                orientation: Orientation::Horizontal,
                scale: Scale::LinearQuantitative,
                ticks,
                pixel_span: Span { min: p.ax, max: p.right },
                position: p.ay,
            },
        );
        self.x_title();
    }

    fn mark(&self, series: &str, category: &str, color: Rgb) -> GtRegion {
        let label = format!("{} for {}", self.d.series_desc(series), self.d.category_desc(category));
        let mut r = region(Role::DataMark, label, color);
        r.series = Some(series.to_owned());
        r.category = Some(category.to_owned());
        if let Some(row) = self.d.row(series, category) {
            r.value = Some(row.value);
            r.encoded_value = Some(row.value);
            r.x_value = row.x;
            r.size_value = row.size;
        }
        r
    }

    fn value(&self, series: &str, category: &str) -> f64 {
        self.d.row(series, category).map_or(0.0, |r| r.value)
    }

    fn bars(&mut self) -> Result<(), SynthError> {
        let d = self.d;
        let t = d.chart_type;
        if matches!(t, ChartType::Bar | ChartType::Histogram) && d.series.len() != 1 {
            return Err(SynthError::InvalidData(format!("{t} charts take exactly one series")));
        }
        let colors = d.colors(d.series.len());
        let totals: Vec<f64> =
            d.categories.iter().map(|k| d.series.iter().map(|s| self.value(&s.name, &k.name)).sum()).collect();
        let (axis, suffix) = if t == ChartType::StackedBar100 {
            (NiceAxis { lo: 0.0, hi: 100.0, step: 25.0 }, "%")
        } else {
            (nice_axis(0.0, totals.iter().copied().fold(0.0, f64::max), true), "")
        };
        self.axis_lines();
        self.y_axis(&axis, suffix);
        self.x_categorical();
        if t.is_stacked() {
            self.series_legend(&colors)?;
        }
        let p = self.plot;
        let n = d.categories.len();
        let band = p.band(n);
        for (i, k) in d.categories.iter().enumerate() {
            let c = p.center(n, i);
            let (x0, x1) = if t == ChartType::Histogram {
                ((f64::from(p.ax) + band * i as f64).round() as i32 + 2, (f64::from(p.ax) + band * (i + 1) as f64).round() as i32 - 1)
            } else {
                ((c - 0.3 * band).round() as i32, (c + 0.3 * band).round() as i32 - 1)
            };
            let mut cum = 0.0;
            for (s, &color) in d.series.iter().zip(&colors) {
                let Some(row) = d.row(&s.name, &k.name) else { continue };
                let v = if t == ChartType::StackedBar100 { row.value / totals[i] * 100.0 } else { row.value };
                let y0 = p.ypix(&axis, cum + v).round() as i32;
                let y1 = p.ypix(&axis, cum).round() as i32 - 1;
                if y0 > y1 || x0 > x1 {
                    return Err(overflow(format!("mark {}/{} is too small to draw", s.name, k.name)));
                }
                let mut r = self.mark(&s.name, &k.name, color);
                r.encoded_value = Some(v);
                let id = self.c.add(r);
                self.c.rect(id, x0, x1, y0, y1);
                cum += v;
            }
        }
        Ok(())
    }

    fn lines(&mut self) -> Result<(), SynthError> {
        let d = self.d;
        let t = d.chart_type;
        if t == ChartType::Area && d.series.len() != 1 {
            return Err(SynthError::InvalidData("area charts take exactly one series".into()));
        }
        let colors = d.colors(d.series.len());
        let n = d.categories.len();
        if n < 2 {
            return Err(SynthError::InvalidData("line-based charts need at least two categories".into()));
        }
        // cumulative tops per series (bottom series first)
        let mut tops: Vec<Vec<f64>> = Vec::new();
        for s in &d.series {
            let prev = tops.last().cloned().unwrap_or_else(|| vec![0.0; n]);
            let row: Vec<f64> = d
                .categories
                .iter()
                .enumerate()
                .map(|(i, k)| self.value(&s.name, &k.name) + if t == ChartType::StackedArea { prev[i] } else { 0.0 })
                .collect();
            tops.push(row);
        }
        let max = tops.iter().flatten().copied().fold(0.0, f64::max);
        let axis = nice_axis(0.0, max, true);
        self.axis_lines();
        self.y_axis(&axis, "");
        let centers = self.x_categorical();
        if d.series.len() > 1 {
            self.series_legend(&colors)?;
        }
        let p = self.plot;
        let column_tops = |vals: &[f64]| -> Vec<(i32, i32)> {
            let mut out = Vec::new();
            for i in 0..n - 1 {
                let (xa, xb) = (centers[i], centers[i + 1]);
                let (ya, yb) = (p.ypix(&axis, vals[i]), p.ypix(&axis, vals[i + 1]));
                let end = if i == n - 2 { xb } else { xb - 1 };
                for x in xa..=end {
                    let f = f64::from(x - xa) / f64::from(xb - xa);
                    out.push((x, (ya + (yb - ya) * f).round() as i32));
                }
            }
            out
        };
        let mut below: Vec<(i32, i32)> = centers
            .first()
            .map(|&a| (a..=*centers.last().unwrap()).map(|x| (x, p.ay)).collect())
            .unwrap_or_default();
        for (si, s) in d.series.iter().enumerate() {
            let desc = d.series_desc(&s.name).to_owned();
            let kind = match t {
                ChartType::Line => "line",
                ChartType::Area => "area",
                _ => "band",
            };
            let mut r = region(Role::DataMark, format!("{desc} {kind}"), colors[si]);
            r.series = Some(s.name.clone());
            r.points = d
                .categories
                .iter()
                .enumerate()
                .map(|(i, k)| GtPoint {
                    category: k.name.clone(),
                    x: centers[i],
                    y: p.ypix(&axis, tops[si][i]).round() as i32,
                    value: self.value(&s.name, &k.name),
                })
                .collect();
            let id = self.c.add(r);
            match t {
                ChartType::Line => {
                    let pts: Vec<(i32, i32)> = (0..n).map(|i| (centers[i], p.ypix(&axis, tops[si][i]).round() as i32)).collect();
                    let m = raster::thick_polyline(&pts, LINE_HALF_WIDTH);
                    self.c.paint(id, &m);
                }
                _ => {
                    let cols = column_tops(&tops[si]);
                    for (&(x, top), &(_, bottom)) in cols.iter().zip(&below) {
                        if top <= bottom - 1 {
                            self.c.rect(id, x, x, top, bottom - 1);
                        }
                    }
                    below = cols;
                }
            }
        }
        Ok(())
    }

    fn dots(&mut self) -> Result<(), SynthError> {
        let d = self.d;
        let colors = d.colors(d.series.len());
        let xs: Vec<f64> = d.table.iter().filter_map(|r| r.x).collect();
        let ys: Vec<f64> = d.table.iter().map(|r| r.value).collect();
        let mn = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let mx = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let xa = nice_axis(mn(&xs), mx(&xs), false);
        let ya = nice_axis(mn(&ys), mx(&ys), false);
        self.axis_lines();
        self.y_axis(&ya, "");
        self.x_quantitative(&xa);
        if d.series.len() > 1 {
            self.series_legend(&colors)?;
        }
        let p = self.plot;
        let max_size = d.table.iter().filter_map(|r| r.size).fold(0.0, f64::max);
        let mut placed: Vec<(i32, i32, f64)> = Vec::new();
        for s in &d.series {
            let color = colors[d.series.iter().position(|q| q.name == s.name).unwrap()];
            for k in &d.categories {
                let Some(row) = d.row(&s.name, &k.name) else { continue };
                let cx = p.xpix(&xa, row.x.unwrap_or(0.0)).round() as i32;
                let cy = p.ypix(&ya, row.value).round() as i32;
                let r = match (d.chart_type, row.size) {
                    (ChartType::Bubble, Some(sz)) => ((sz / max_size).sqrt() * BUBBLE_MAX_RADIUS).max(BUBBLE_MIN_RADIUS),
                    _ => DOT_RADIUS,
                };
                let ri = r.ceil() as i32;
                if cx - ri <= p.ax + 1 || cx + ri >= p.right || cy - ri < p.top || cy + ri >= p.ay - 1 {
                    return Err(overflow(format!("dot {}/{} leaves the plot area", s.name, k.name)));
                }
                for &(ox, oy, or) in &placed {
                    let dist = f64::from((ox - cx).pow(2) + (oy - cy).pow(2)).sqrt();
                    if dist < or + r + 3.0 {
                        return Err(overflow(format!("dot {}/{} overlaps another dot", s.name, k.name)));
                    }
                }
                placed.push((cx, cy, r));
                let id = self.c.add(self.mark(&s.name, &k.name, color));
                self.c.paint(id, &raster::disk(cx, cy, r));
            }
        }
        Ok(())
    }

    fn pie(&mut self) -> Result<(), SynthError> {
        let d = self.d;
        let [s] = d.series.as_slice() else {
            return Err(SynthError::InvalidData("pie charts take exactly one series".into()));
        };
        let colors = d.colors(d.categories.len());
        self.category_legend(&colors)?;
        let total: f64 = d.categories.iter().map(|k| self.value(&s.name, &k.name)).sum();
        let mut ends = Vec::new();
        let mut cum = 0.0;
        let mut ids = Vec::new();
        for (k, &color) in d.categories.iter().zip(&colors) {
            let v = self.value(&s.name, &k.name);
            cum += v / total;
            ends.push(cum);
            let mut r = self.mark(&s.name, &k.name, color);
            r.encoded_value = Some(v / total * 100.0);
            ids.push(self.c.add(r));
        }
        let cx = self.c.w / 2;
        let ri = PIE_RADIUS as i32;
        for y in PIE_CENTER_Y - ri..=PIE_CENTER_Y + ri {
            for x in cx - ri..=cx + ri {
                let (dx, dy) = (f64::from(x - cx), f64::from(y - PIE_CENTER_Y));
                if dx * dx + dy * dy > PIE_RADIUS * PIE_RADIUS {
                    continue;
                }
                let mut theta = dx.atan2(-dy);
                if theta < 0.0 {
                    theta += std::f64::consts::TAU;
                }
                let f = theta / std::f64::consts::TAU;
                let i = ends.iter().position(|&e| f < e).unwrap_or(ends.len() - 1);
                self.c.set(ids[i], x, y);
            }
        }
        Ok(())
    }

    fn treemap(&mut self) -> Result<(), SynthError> {
        let d = self.d;
        let colors = d.colors(d.series.len());
        self.series_legend(&colors)?;
        let (x0, x1, y0, y1) = (60.0, f64::from(self.c.w - 60), 100.0, f64::from(self.c.h - 40));
        let group_total = |s: &str| -> f64 { d.table.iter().filter(|r| r.series == s).map(|r| r.value).sum() };
        let total: f64 = d.table.iter().map(|r| r.value).sum();
        let mut gcum = 0.0;
        for (s, &color) in d.series.iter().zip(&colors) {
            let gt = group_total(&s.name);
            let gx0 = (x0 + (x1 - x0) * gcum / total).round() as i32;
            gcum += gt;
            let gx1 = (x0 + (x1 - x0) * gcum / total).round() as i32;
            let mut lcum = 0.0;
            for k in &d.categories {
                let Some(row) = d.row(&s.name, &k.name) else { continue };
                let ly0 = (y0 + (y1 - y0) * lcum / gt).round() as i32;
                lcum += row.value;
                let ly1 = (y0 + (y1 - y0) * lcum / gt).round() as i32;
                let (cx0, cx1, cy0, cy1) = (gx0 + 1, gx1 - 2, ly0 + 1, ly1 - 2);
                let text_w = font::ink_width(&k.name, self.c.scale) - font::ink_offset(&k.name, self.c.scale);
                if cx1 - cx0 + 1 < text_w + 12 || cy1 - cy0 + 1 < self.c.text_height() + 12 {
                    return Err(overflow(format!("label {} does not fit its treemap cell", k.name)));
                }
                let mut r = self.mark(&s.name, &k.name, color);
                r.encoded_value = Some(row.value / total * 100.0);
                let id = self.c.add(r);
                self.c.rect(id, cx0, cx1, cy0, cy1);
                self.c.text(&k.name, Role::Other, cx0 + 6, cy0 + 6);
            }
        }
        Ok(())
    }

    fn choropleth(&mut self) -> Result<(), SynthError> {
        let d = self.d;
        let [s] = d.series.as_slice() else {
            return Err(SynthError::InvalidData("choropleth maps take exactly one series".into()));
        };
        let (cols, rows) = (4usize, 3usize);
        if d.categories.len() != cols * rows {
            return Err(SynthError::InvalidData(format!("choropleth maps have exactly {} regions", cols * rows)));
        }
        let classes: Vec<f64> = {
            let set: BTreeSet<i64> = d.table.iter().map(|r| (r.value * 1000.0).round() as i64).collect();
            set.into_iter().map(|v| v as f64 / 1000.0).collect()
        };
        if classes.len() > CLASS_COLORS.len() {
            return Err(SynthError::InvalidData(format!("at most {} value classes", CLASS_COLORS.len())));
        }
        let class_color = |v: f64| CLASS_COLORS[classes.iter().position(|c| (c - v).abs() < 1e-9).unwrap()];
        let entries = classes
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut r = region(Role::LegendSwatch, format!("Legend key for {}", fmt_value(v, "")), CLASS_COLORS[i]);
                r.value = Some(v);
                (fmt_value(v, ""), r)
            })
            .collect();
        self.legend(entries)?;

        let mut rng = ChaCha8Rng::seed_from_u64(d.rng_seed);
        let (x0, y0, cw, ch) = (60.0, 100.0, 170.0, 140.0);
        let mut verts = vec![vec![(0.0, 0.0); rows + 1]; cols + 1];
        for (i, col) in verts.iter_mut().enumerate() {
            for (j, v) in col.iter_mut().enumerate() {
                let interior = i > 0 && i < cols && j > 0 && j < rows;
                let (jx, jy) = if interior {
                    (rng.random_range(-MAP_JITTER..=MAP_JITTER), rng.random_range(-MAP_JITTER..=MAP_JITTER))
                } else {
                    (0, 0)
                };
                *v = (x0 + cw * i as f64 + f64::from(jx), y0 + ch * j as f64 + f64::from(jy));
            }
        }
        let mut ids = Vec::new();
        for j in 0..rows {
            for i in 0..cols {
                let k = &d.categories[j * cols + i];
                let v = self.value(&s.name, &k.name);
                let id = self.c.add(self.mark(&s.name, &k.name, class_color(v)));
                let poly = [verts[i][j], verts[i + 1][j], verts[i + 1][j + 1], verts[i][j + 1]];
                let m = raster::fill_polygon(&poly);
                self.c.paint(id, &m);
                ids.push(id);
            }
        }
        // white borders: clear every map pixel that touches a different owner
        let snapshot = self.c.owner.clone();
        let mine: BTreeSet<u32> = ids.iter().copied().collect();
        for y in 0..self.c.h {
            for x in 0..self.c.w {
                let o = snapshot[(y * self.c.w + x) as usize];
                if !mine.contains(&o) {
                    continue;
                }
                let touches = (-1..=1).any(|dy| {
                    (-1..=1).any(|dx| {
                        let (nx, ny) = (x + dx, y + dy);
                        nx >= 0 && ny >= 0 && nx < self.c.w && ny < self.c.h && snapshot[(ny * self.c.w + nx) as usize] != o
                    })
                });
                if touches {
                    self.c.owner[(y * self.c.w + x) as usize] = 0;
                }
            }
        }
        let h = self.c.text_height();
        let masks = self.c.masks();
        for (idx, &id) in ids.iter().enumerate() {
            let k = d.categories[idx].name.clone();
            let m = &masks[id as usize];
            let (mx, my) = m.centroid().ok_or_else(|| overflow(format!("region {k} vanished")))?;
            let b = self.c.text_center(&k, Role::Other, mx, my.round() as i32 - h / 2);
            let padded = BBox::new(b.x_min - 3, b.x_max + 3, b.y_min - 3, b.y_max + 3);
            if !Mask::from_bbox(&padded).pixels().all(|(x, y)| m.contains(x, y) || b.contains(x, y)) {
                return Err(overflow(format!("label {k} does not fit its map region")));
            }
        }
        Ok(())
    }
}

fn build_spec(d: &DataSpec, axes: Vec<Axis>) -> ChartSpec {
    let t = d.chart_type;
    let series = match t {
        ChartType::Scatterplot | ChartType::Bubble => {
            let mut v = vec![
                SeriesEncoding { name: d.x_name.clone(), channel: Channel::X },
                SeriesEncoding { name: d.y_name.clone(), channel: Channel::Y },
            ];
            if let Some(sz) = &d.size_name {
                v.push(SeriesEncoding { name: sz.clone(), channel: Channel::Size });
            }
            if d.series.len() > 1 {
                v.extend(d.series.iter().map(|s| SeriesEncoding { name: s.name.clone(), channel: Channel::Color }));
            }
            v
        }
        _ => {
            let channel = match t {
                ChartType::Pie => Channel::Angle,
                ChartType::Treemap => Channel::Area,
                ChartType::Choropleth => Channel::Color,
                _ if d.series.len() > 1 => Channel::Color,
                _ => Channel::Y,
            };
            d.series.iter().map(|s| SeriesEncoding { name: s.name.clone(), channel }).collect()
        }
    };
    ChartSpec {
        schema_version: SchemaVersion,
        chart_type: t,
        shape_class: classify_shape(t),
        title: Some(d.title.clone()),
        axes,
        series,
        image_size: ImageSize { width: d.style.width, height: d.style.height },
    }
}

/// Renders a chart and its exact ground truth.
pub fn render(d: &DataSpec) -> Result<(Image, GroundTruth), SynthError> {
    validate_data(d)?;
    let (w, h) = (d.style.width as i32, d.style.height as i32);
    let m = d.style.margins;
    let plot = Plot { ax: m.left, right: w - m.right, top: m.top, ay: h - m.bottom };
    if plot.right - plot.ax < 100 || plot.ay - plot.top < 100 {
        return Err(overflow("margins leave no plot area"));
    }
    let mut ctx = Ctx { d, c: Canvas::new(w, h, d.style.font_scale), plot, axes: Vec::new() };
    ctx.title();
    match d.chart_type {
        ChartType::Bar | ChartType::Histogram | ChartType::StackedBar | ChartType::StackedBar100 => ctx.bars()?,
        ChartType::Line | ChartType::Area | ChartType::StackedArea => ctx.lines()?,
        ChartType::Scatterplot | ChartType::Bubble => ctx.dots()?,
        ChartType::Pie => ctx.pie()?,
        ChartType::Treemap => ctx.treemap()?,
        ChartType::Choropleth => ctx.choropleth()?,
    }
    let Ctx { c, axes, .. } = ctx;

    let mut img = raster::blank(d.style.width, d.style.height, Rgb::WHITE);
    for y in 0..h {
        for x in 0..w {
            let o = c.owner[(y * w + x) as usize];
            if o != 0 {
                raster::put(&mut img, x, y, c.slots[o as usize - 1].0);
            }
        }
    }

    let masks = c.masks();
    let mut regions = Vec::new();
    let mut texts = Vec::new();
    for (i, (_, slot)) in c.slots.into_iter().enumerate() {
        match slot {
            Slot::Region(r) => {
                let mut r = *r;
                let mask = masks[i + 1].clone();
                if r.role == Role::DataMark && mask.area() < MIN_MARK_AREA {
                    return Err(overflow(format!("mark `{}` is hidden or too small", r.label)));
                }
                let Some(bbox) = mask.bbox() else { continue };
                r.bbox = bbox;
                r.mask = mask;
                regions.push(r);
            }
            Slot::Text { text, role, bbox } => {
                if !bbox.within_image(d.style.width, d.style.height) {
                    return Err(overflow(format!("text `{text}` leaves the image")));
                }
                texts.push(GtText { text, bbox, role });
            }
        }
    }
    regions.sort_by_key(|r| (r.bbox.reading_key(), r.label.clone()));
    for (i, r) in regions.iter_mut().enumerate() {
        r.id = i as u32 + 1;
    }
    texts.sort_by_key(|t| t.bbox.reading_key());

    // Every label must come back as exactly one text element.
    let detected: BTreeSet<BBox> =
        regiondetect::group_glyphs(&regiondetect::detect_glyphs(&img)).into_iter().map(|e| e.bbox).collect();
    let expected: BTreeSet<BBox> = texts.iter().map(|t| t.bbox).collect();
    if detected != expected {
        let missing: Vec<&str> = texts.iter().filter(|t| !detected.contains(&t.bbox)).map(|t| t.text.as_str()).collect();
        return Err(overflow(format!("labels collide or touch other ink: {missing:?}")));
    }

    let gt = GroundTruth {
        schema_version: SchemaVersion,
        chart_id: d.chart_id.clone(),
        image_digest: raster::pixel_digest(&img),
        spec: build_spec(d, axes),
        regions,
        text_elements: texts,
    };
    Ok((img, gt))
}
