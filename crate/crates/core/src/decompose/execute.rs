use super::rules::split_list;
use super::{Answer, Decomposition, Params, Subtask, TaskType};
use crate::model::Role;
use crate::semantics::SemanticRegion;
use crate::synth::DataSpec;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

/// Correlation strength needed to call a relation or trend.
pub const CORRELATION_THRESHOLD: f64 = 0.5;
/// Skewness magnitude below which a distribution counts as symmetric.
pub const SKEW_THRESHOLD: f64 = 0.5;
/// Residual z-score at which a point is an anomaly.
pub const ANOMALY_Z: f64 = 2.0;
/// Single-linkage distance on range-normalized coordinates.
pub const CLUSTER_GAP: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Datum {
    pub series: String,
    pub category: String,
    pub value: f64,
    pub x: Option<f64>,
    pub size: Option<f64>,
}

/// The data a decomposition is executed over.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct DataTable {
    pub data: Vec<Datum>,
    /// Category order along the chart.
    pub categories: Vec<String>,
}

impl DataTable {
    pub fn from_data_spec(d: &DataSpec) -> Self {
        DataTable {
            data: d
                .table
                .iter()
                .map(|r| Datum { series: r.series.clone(), category: r.category.clone(), value: r.value, x: r.x, size: r.size })
                .collect(),
            categories: d.categories.iter().map(|c| c.name.clone()).collect(),
        }
    }

    /// Values decoded from labelled regions. `categories` fixes the order.
    pub fn from_regions(regions: &[SemanticRegion], categories: &[String]) -> Self {
        let mut data = Vec::new();
        for r in regions.iter().filter(|r| r.role == Role::DataMark) {
            let series = r.series.clone().unwrap_or_default();
            if !r.points.is_empty() {
                for p in &r.points {
                    data.push(Datum { series: series.clone(), category: p.category.clone(), value: p.value, x: None, size: None });
                }
            } else if let (Some(c), Some(v)) = (&r.category, r.decoded_value) {
                data.push(Datum { series, category: c.clone(), value: v, x: r.decoded_x, size: r.decoded_size });
            }
        }
        let mut cats: Vec<String> = categories.to_vec();
        for d in &data {
            if !cats.contains(&d.category) {
                cats.push(d.category.clone());
            }
        }
        let pos = |c: &str| cats.iter().position(|x| x == c).unwrap_or(usize::MAX);
        data.sort_by_key(|d| pos(&d.category));
        DataTable { data, categories: cats }
    }

    fn datum(&self, series: &str, category: &str) -> Option<&Datum> {
        self.data.iter().find(|d| d.series == series && d.category == category)
    }

    fn order(&self, category: &str) -> f64 {
        self.categories.iter().position(|c| c == category).unwrap_or(0) as f64
    }

    fn category_total(&self, category: &str) -> f64 {
        self.data.iter().filter(|d| d.category == category).map(|d| d.value).sum()
    }
}

/// A keyed number flowing between subtasks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub series: Option<String>,
    pub category: Option<String>,
    pub v: f64,
}

impl Row {
    fn key(&self, by: &str) -> String {
        let (a, b) = if by == "series" { (&self.series, &self.category) } else { (&self.category, &self.series) };
        a.clone().or_else(|| b.clone()).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutput {
    pub subtask_id: u32,
    pub rows: Vec<Row>,
    pub answer: Option<Answer>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecTrace {
    pub steps: Vec<StepOutput>,
    pub answer: Answer,
}

impl ExecTrace {
    pub fn step(&self, id: u32) -> Option<&StepOutput> {
        self.steps.iter().find(|s| s.subtask_id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("EXEC_FAILED: subtask {subtask}: {reason}")]
    Failed { subtask: u32, reason: String },
}

fn field_value(d: &Datum, field: &str) -> Option<f64> {
    match field {
        "x" => d.x,
        "size" => d.size,
        _ => Some(d.value),
    }
}

fn source_rows(t: &DataTable, field: &str) -> Vec<Row> {
    t.data
        .iter()
        .filter_map(|d| field_value(d, field).map(|v| Row { series: Some(d.series.clone()), category: Some(d.category.clone()), v }))
        .collect()
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

struct Exec<'a> {
    table: &'a DataTable,
    outputs: BTreeMap<u32, StepOutput>,
}

impl Exec<'_> {
    fn input(&self, s: &Subtask, field: &str) -> Vec<Row> {
        if s.deps.is_empty() {
            source_rows(self.table, field)
        } else {
            s.deps.iter().filter_map(|d| self.outputs.get(d)).flat_map(|o| o.rows.iter().cloned()).collect()
        }
    }

    /// x coordinate of a row for regression-style tasks.
    fn x_of(&self, r: &Row) -> f64 {
        let c = r.category.as_deref().unwrap_or_default();
        r.series
            .as_deref()
            .and_then(|s| self.table.datum(s, c))
            .and_then(|d| d.x)
            .unwrap_or_else(|| self.table.order(c))
    }

    fn run(&self, s: &Subtask) -> Result<(Vec<Row>, Option<Answer>), String> {
        let p: &Params = &s.params;
        let get = |k: &str| p.get(k).map(String::as_str);
        let field = get("field").unwrap_or("value");
        let by = get("by").unwrap_or("category");
        let single = |rows: &Vec<Row>| (rows.len() == 1).then(|| Answer::Number(rows[0].v));
        match s.task_type {
            TaskType::Filter => {
                let series = get("series").map(split_list);
                let cats = get("category").map(split_list);
                let num = |k: &str| get(k).map(|v| v.parse::<f64>().map_err(|_| format!("`{k}` is not a number")));
                let (above, below) = (num("above").transpose()?, num("below").transpose()?);
                let keep = |r: &Row| {
                    let has = |want: &Option<Vec<String>>, have: &Option<String>| match (want, have) {
                        (None, _) => true,
                        (Some(w), Some(h)) => w.contains(h),
                        (Some(_), None) => false,
                    };
                    has(&series, &r.series)
                        && has(&cats, &r.category)
                        && above.is_none_or(|a| r.v > a)
                        && below.is_none_or(|b| r.v < b)
                };
                Ok((self.input(s, "value").into_iter().filter(keep).collect(), None))
            }
            TaskType::RetrieveValue => {
                let rows: Vec<Row> = if s.deps.is_empty() {
                    source_rows(self.table, field)
                } else {
                    self.input(s, field)
                        .into_iter()
                        .filter_map(|r| match (&r.series, &r.category) {
                            (Some(se), Some(c)) => self.table.datum(se, c).and_then(|d| field_value(d, field)).map(|v| Row { v, ..r }),
                            _ => Some(r),
                        })
                        .collect()
                };
                let a = single(&rows);
                Ok((rows, a))
            }
            TaskType::ComputeDerivedValue => {
                let mut rows = self.input(s, "value");
                if let Some(c) = get("category").map(split_list) {
                    rows.retain(|r| r.category.as_ref().is_some_and(|x| c.contains(x)));
                }
                match get("op") {
                    Some("proportion") => {
                        let mut out = Vec::new();
                        for r in rows {
                            let total = self.table.category_total(r.category.as_deref().unwrap_or_default());
                            if total == 0.0 {
                                return Err("proportion of an empty whole".into());
                            }
                            out.push(Row { v: r.v / total * 100.0, ..r });
                        }
                        let a = single(&out);
                        Ok((out, a))
                    }
                    Some("sum") if p.contains_key("by") => {
                        let mut groups: Vec<(String, f64)> = Vec::new();
                        for r in &rows {
                            let k = r.key(by);
                            match groups.iter_mut().find(|(g, _)| *g == k) {
                                Some(g) => g.1 += r.v,
                                None => groups.push((k, r.v)),
                            }
                        }
                        let out: Vec<Row> = groups
                            .into_iter()
                            .map(|(k, v)| {
                                if by == "series" {
                                    Row { series: Some(k), category: None, v }
                                } else {
                                    Row { series: None, category: Some(k), v }
                                }
                            })
                            .collect();
                        Ok((out, None))
                    }
                    Some("sum") => {
                        let v = rows.iter().map(|r| r.v).sum();
                        Ok((vec![Row { series: None, category: None, v }], Some(Answer::Number(v))))
                    }
                    Some("difference") => match rows.as_slice() {
                        [a, b] => {
                            let v = (a.v - b.v).abs();
                            Ok((vec![Row { series: None, category: None, v }], Some(Answer::Number(v))))
                        }
                        _ => Err(format!("difference needs two values, got {}", rows.len())),
                    },
                    Some("count") => {
                        let v = rows.len() as f64;
                        Ok((vec![Row { series: None, category: None, v }], Some(Answer::Number(v))))
                    }
                    other => Err(format!("unknown op {other:?}")),
                }
            }
            TaskType::FindExtremum => {
                let rows = self.input(s, field);
                let mut best: Option<&Row> = None;
                for r in &rows {
                    let better = match best {
                        None => true,
                        Some(b) if get("op") == Some("min") => r.v < b.v,
                        Some(b) => r.v > b.v,
                    };
                    if better {
                        best = Some(r);
                    }
                }
                let best = best.ok_or("no candidates")?.clone();
                let label = best.key(by);
                Ok((vec![best], Some(Answer::Label(label))))
            }
            TaskType::Sort => {
                let mut rows = self.input(s, "value");
                if get("order") == Some("ascending") {
                    rows.sort_by(|a, b| a.v.total_cmp(&b.v));
                } else {
                    rows.sort_by(|a, b| b.v.total_cmp(&a.v));
                }
                let labels = rows.iter().map(|r| r.key(by)).collect();
                Ok((rows, Some(Answer::List(labels))))
            }
            TaskType::DetermineRange => {
                let rows = self.input(s, field);
                if rows.is_empty() {
                    return Err("no values".into());
                }
                let hi = rows.iter().map(|r| r.v).fold(f64::NEG_INFINITY, f64::max);
                let lo = rows.iter().map(|r| r.v).fold(f64::INFINITY, f64::min);
                Ok((vec![Row { series: None, category: None, v: hi - lo }], Some(Answer::Number(hi - lo))))
            }
            TaskType::CharacterizeDistribution => {
                let rows = self.input(s, "value");
                let pos: Vec<f64> = rows
                    .iter()
                    .map(|r| {
                        let c = r.category.as_deref().unwrap_or_default();
                        c.parse::<f64>().unwrap_or_else(|_| self.table.order(c))
                    })
                    .collect();
                let w: f64 = rows.iter().map(|r| r.v).sum();
                if w <= 0.0 {
                    return Err("empty distribution".into());
                }
                let m = rows.iter().zip(&pos).map(|(r, x)| r.v * x).sum::<f64>() / w;
                let moment = |k: i32| rows.iter().zip(&pos).map(|(r, x)| r.v * (x - m).powi(k)).sum::<f64>() / w;
                let (m2, m3) = (moment(2), moment(3));
                let g1 = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
                let label = if g1 > SKEW_THRESHOLD {
                    "right-skewed"
                } else if g1 < -SKEW_THRESHOLD {
                    "left-skewed"
                } else {
                    "symmetric"
                };
                Ok((rows, Some(Answer::Label(label.into()))))
            }
            TaskType::FindAnomalies => {
                let rows = self.input(s, "value");
                let xs: Vec<f64> = rows.iter().map(|r| self.x_of(r)).collect();
                let n = xs.len() as f64;
                if rows.len() < 3 {
                    return Err("too few points".into());
                }
                let (mx, my) = (xs.iter().sum::<f64>() / n, rows.iter().map(|r| r.v).sum::<f64>() / n);
                let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
                let slope = if sxx > 0.0 { xs.iter().zip(&rows).map(|(x, r)| (x - mx) * (r.v - my)).sum::<f64>() / sxx } else { 0.0 };
                let res: Vec<f64> = xs.iter().zip(&rows).map(|(x, r)| r.v - (my + slope * (x - mx))).collect();
                let mean = res.iter().sum::<f64>() / n;
                let sd = (res.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
                let out: Vec<Row> = rows
                    .iter()
                    .zip(&res)
                    .filter(|(_, e)| sd > 0.0 && ((*e - mean) / sd).abs() >= ANOMALY_Z)
                    .map(|(r, _)| r.clone())
                    .collect();
                let labels: Vec<String> = out.iter().map(|r| r.key("category")).collect();
                let answer = match labels.as_slice() {
                    [] => Answer::Label("none".into()),
                    [one] => Answer::Label(one.clone()),
                    _ => Answer::List(labels),
                };
                Ok((out, Some(answer)))
            }
            TaskType::Cluster => {
                let rows = self.input(s, "value");
                let pts: Vec<(f64, f64)> = rows.iter().map(|r| (self.x_of(r), r.v)).collect();
                let span = |f: fn(&(f64, f64)) -> f64| {
                    let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
                    let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
                    (lo, if hi > lo { hi - lo } else { 1.0 })
                };
                let ((x0, xr), (y0, yr)) = (span(|p| p.0), span(|p| p.1));
                let norm: Vec<(f64, f64)> = pts.iter().map(|(x, y)| ((x - x0) / xr, (y - y0) / yr)).collect();
                let mut parent: Vec<usize> = (0..norm.len()).collect();
                fn root(p: &mut [usize], mut i: usize) -> usize {
                    while p[i] != i {
                        p[i] = p[p[i]];
                        i = p[i];
                    }
                    i
                }
                for i in 0..norm.len() {
                    for j in i + 1..norm.len() {
                        let d = ((norm[i].0 - norm[j].0).powi(2) + (norm[i].1 - norm[j].1).powi(2)).sqrt();
                        if d <= CLUSTER_GAP {
                            let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                            parent[a] = b;
                        }
                    }
                }
                let k = (0..norm.len()).filter(|&i| root(&mut parent, i) == i).count();
                Ok((rows, Some(Answer::Number(k as f64))))
            }
            TaskType::Correlate => {
                let (xs, ys, rows): (Vec<f64>, Vec<f64>, Vec<Row>) = if get("against") == Some("order") {
                    let rows = self.input(s, "value");
                    let xs = rows.iter().map(|r| self.table.order(r.category.as_deref().unwrap_or_default())).collect();
                    (xs, rows.iter().map(|r| r.v).collect(), rows)
                } else {
                    let (fx, fy) = (get("x_field").unwrap_or("x"), get("y_field").unwrap_or("value"));
                    let pairs: Vec<(f64, f64)> =
                        self.table.data.iter().filter_map(|d| Some((field_value(d, fx)?, field_value(d, fy)?))).collect();
                    (pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect(), self.input(s, "value"))
                };
                let r = pearson(&xs, &ys).unwrap_or(0.0);
                let trend = get("as") == Some("trend");
                let label = match (r >= CORRELATION_THRESHOLD, r <= -CORRELATION_THRESHOLD, trend) {
                    (true, _, true) => "increasing",
                    (_, true, true) => "decreasing",
                    (_, _, true) => "stable",
                    (true, _, false) => "positive",
                    (_, true, false) => "negative",
                    _ => "none",
                };
                Ok((rows, Some(Answer::Label(label.into()))))
            }
        }
    }
}

/// Runs every subtask in order over `table`; the last subtask's answer is
/// the answer to the question.
pub fn execute(dec: &Decomposition, table: &DataTable) -> Result<ExecTrace, ExecError> {
    let mut ex = Exec { table, outputs: BTreeMap::new() };
    let mut steps = Vec::new();
    for s in &dec.subtasks {
        let (rows, answer) = ex.run(s).map_err(|reason| ExecError::Failed { subtask: s.id, reason })?;
        let out = StepOutput { subtask_id: s.id, rows, answer };
        ex.outputs.insert(s.id, out.clone());
        steps.push(out);
    }
    let last = dec.subtasks.last().map(|s| s.id).unwrap_or(0);
    let answer = steps
        .last()
        .and_then(|o| o.answer.clone())
        .ok_or(ExecError::Failed { subtask: last, reason: "final subtask yields no answer".into() })?;
    Ok(ExecTrace { steps, answer })
}
