//! Trial harness: every question of a task bank runs through the full
//! pipeline a number of times and each trial is scored on region detection
//! (G1), value decoding (G2) and decomposition soundness (G3).

use crate::decompose::{self, execute, region_refs, Answer, DataTable, Decomposition, TaskType};
use crate::doc::{Document, SchemaVersion};
use crate::guidance;
use crate::model::{ChartType, Orientation, Role};
use crate::modelclient::ModelClient;
use crate::pipeline::{self, Analysis};
use crate::raster;
use crate::semantics::{AxisCalibration, SemanticRegion, SemanticRegions};
use crate::synth::{corpus_from_bank, CorpusEntry, GroundTruth, SynthError, TaskBank, TaskFixture};
use crate::workflow::Workflow;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

/// Minimum mask IoU for a ground-truth region to count as found.
pub const IOU_THRESHOLD: f64 = 0.9;
/// Allowed decoding error as a share of the axis range.
pub const VALUE_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TrialRow {
    pub task_id: String,
    pub chart_id: String,
    pub chart_type: ChartType,
    /// Type of the step that produces the answer.
    pub task_type: Option<TaskType>,
    pub trial: u32,
    pub g1: bool,
    pub g2: bool,
    pub g3: bool,
    pub correct: bool,
    pub expected: Answer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<Answer>,
    /// Every trial of this task produced the same outputs.
    pub deterministic: bool,
    pub digest: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Breakdown {
    pub key: String,
    pub trials: u32,
    pub correct: u32,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub schema_version: SchemaVersion,
    pub backend: String,
    pub seed: u64,
    pub tasks: u32,
    pub trials_per_task: u32,
    pub total_trials: u32,
    pub correct: u32,
    pub percent: f64,
    pub g1_passed: u32,
    pub g2_passed: u32,
    pub g3_passed: u32,
    pub deterministic: bool,
    pub by_chart_type: Vec<Breakdown>,
    pub by_task_type: Vec<Breakdown>,
    pub rows: Vec<TrialRow>,
}

impl Document for EvalReport {
    const SCHEMA: &'static str = "evalreport.v1";
}

fn percent(n: u32, d: u32) -> f64 {
    if d == 0 {
        0.0
    } else {
        (f64::from(n) / f64::from(d) * 10_000.0).round() / 100.0
    }
}

/// G1: every ground-truth data mark is matched by a detected region at
/// IoU >= 0.9 and every text element is found with its exact box.
pub fn score_regions(truth: &GroundTruth, regions: &SemanticRegions) -> Vec<String> {
    let mut failures = Vec::new();
    for gt in truth.data_marks() {
        let best = regions.regions.iter().filter(|r| !r.is_text()).map(|r| r.mask.iou(&gt.mask)).fold(0.0, f64::max);
        if best < IOU_THRESHOLD {
            failures.push(format!("G1: region {} `{}` best IoU {best:.3}", gt.id, gt.label));
        }
    }
    for t in &truth.text_elements {
        if !regions.regions.iter().any(|r| r.is_text() && r.bbox == t.bbox) {
            failures.push(format!("G1: text `{}` at {:?} not found", t.text, t.bbox));
        }
    }
    failures
}

fn best_match<'a>(regions: &'a SemanticRegions, mask: &crate::model::Mask) -> Option<&'a SemanticRegion> {
    regions
        .regions
        .iter()
        .filter(|r| r.role == Role::DataMark)
        .map(|r| (r.mask.iou(mask), r))
        .filter(|(iou, _)| *iou > 0.0)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, r)| r)
}

/// Scale against which decoding error is measured.
pub fn value_range(truth: &GroundTruth, o: Orientation) -> f64 {
    match truth.spec.chart_type {
        ChartType::Pie | ChartType::Treemap => 100.0,
        ChartType::Choropleth => {
            let vals: Vec<f64> = truth.regions.iter().filter(|r| r.role == Role::LegendSwatch).filter_map(|r| r.value).collect();
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            if hi > lo {
                hi - lo
            } else {
                100.0
            }
        }
        _ => truth.spec.axis(o).and_then(|a| a.value_range()).map_or(100.0, |(lo, hi)| hi - lo),
    }
}

/// G2: decoded values within 2% of the axis range and calibration exact at
/// every tick of the chart description.
pub fn score_values(truth: &GroundTruth, regions: &SemanticRegions) -> Vec<String> {
    let mut failures = Vec::new();
    for axis in truth.spec.quantitative_axes() {
        let Some(cal) = regions.calibration(axis.orientation) else {
            failures.push(format!("G2: no calibration for axis `{}`", axis.name));
            continue;
        };
        for t in &axis.ticks {
            let want = t.value.as_number().unwrap_or(f64::NAN);
            match cal.pixel_to_value(t.pixel) {
                Ok(v) if v == want => {}
                got => failures.push(format!("G2: axis `{}` tick {} decodes to {got:?}, expected {want}", axis.name, t.pixel)),
            }
        }
    }
    let (ytol, xtol) = (
        value_range(truth, Orientation::Vertical) * VALUE_TOLERANCE,
        value_range(truth, Orientation::Horizontal) * VALUE_TOLERANCE,
    );
    let check = |failures: &mut Vec<String>, what: String, got: Option<f64>, want: f64, tol: f64| match got {
        Some(g) if (g - want).abs() <= tol + 1e-9 => {}
        _ => failures.push(format!("G2: {what} decoded {got:?}, expected {want} (tolerance {tol:.3})")),
    };
    for gt in truth.data_marks() {
        let Some(r) = best_match(regions, &gt.mask) else {
            failures.push(format!("G2: region {} `{}` has no detected counterpart", gt.id, gt.label));
            continue;
        };
        if !gt.points.is_empty() {
            for p in &gt.points {
                let got = r.points.iter().find(|d| d.category == p.category).map(|d| d.value);
                check(&mut failures, format!("`{}` at {}", gt.label, p.category), got, p.value, ytol);
            }
            continue;
        }
        if let Some(v) = gt.encoded_value {
            check(&mut failures, format!("`{}`", gt.label), r.decoded_value, v, ytol);
        }
        if let Some(x) = gt.x_value {
            check(&mut failures, format!("`{}` x", gt.label), r.decoded_x, x, xtol);
        }
    }
    failures
}

/// G3 on a decomposition: it survives a schema round trip, every step is
/// grounded and it executes over the source table to the expected answer.
pub fn score_decomposition(dec: &Decomposition, entry: &CorpusEntry, task: &TaskFixture, regions: &[SemanticRegion]) -> (Vec<String>, Option<Answer>) {
    let mut failures = Vec::new();
    if Decomposition::from_json(&dec.to_json()).as_ref() != Ok(dec) {
        failures.push("G3: decomposition does not round-trip".to_owned());
    }
    for v in decompose::check_decomposition(dec, &region_refs(regions)) {
        failures.push(format!("G3: {v}"));
    }
    let answer = match execute(dec, &DataTable::from_data_spec(&entry.data)) {
        Ok(trace) => Some(trace.answer),
        Err(e) => {
            failures.push(format!("G3: {e}"));
            None
        }
    };
    if let Some(a) = &answer {
        if !a.matches(&task.answer) {
            failures.push(format!("G3: answer `{a}`, expected `{}`", task.answer));
        }
    }
    (failures, answer)
}

struct Trial {
    row: TrialRow,
    analysis: Option<Analysis>,
    decomposition: Option<Decomposition>,
}

fn run_trial(entry: &CorpusEntry, task: &TaskFixture, trial: u32, model: &dyn ModelClient) -> Trial {
    let mut row = TrialRow {
        task_id: task.id.clone(),
        chart_id: entry.data.chart_id.clone(),
        chart_type: entry.data.chart_type,
        task_type: None,
        trial,
        g1: false,
        g2: false,
        g3: false,
        correct: false,
        expected: task.answer.clone(),
        answer: None,
        deterministic: true,
        digest: String::new(),
        failures: Vec::new(),
    };
    let png = raster::encode_png(&entry.image);
    let analysis = match pipeline::analyze_image(&entry.image, &png, model) {
        Ok(a) => a,
        Err(e) => {
            row.failures.push(format!("{}: {e}", e.stage()));
            return Trial { row, analysis: None, decomposition: None };
        }
    };
    let g1 = score_regions(&entry.truth, &analysis.regions);
    let g2 = score_values(&entry.truth, &analysis.regions);
    row.g1 = g1.is_empty();
    row.g2 = g2.is_empty();
    row.failures.extend(g1);
    row.failures.extend(g2);
    let dec = match decompose::decompose(&task.question, &analysis.spec, &analysis.regions.regions, model) {
        Ok(d) => Some(d),
        Err(e) => {
            row.failures.push(format!("G3: {e}"));
            None
        }
    };
    if let Some(d) = &dec {
        row.task_type = d.subtasks.last().map(|s| s.task_type);
        let (f, answer) = score_decomposition(d, entry, task, &analysis.regions.regions);
        row.g3 = f.is_empty();
        row.answer = answer;
        row.failures.extend(f);
    }
    row.correct = row.g1 && row.g2 && row.g3;
    let mut h = Sha256::new();
    h.update(analysis.regions.to_json());
    if let Some(d) = &dec {
        h.update(d.to_json());
    }
    h.update(serde_json::to_vec(&row.answer).expect("answers serialize"));
    row.digest = hex::encode(h.finalize());
    Trial { row, analysis: Some(analysis), decomposition: dec }
}

fn breakdown<F: Fn(&TrialRow) -> String>(rows: &[TrialRow], key: F) -> Vec<Breakdown> {
    let mut m: BTreeMap<String, (u32, u32)> = BTreeMap::new();
    for r in rows {
        let e = m.entry(key(r)).or_default();
        e.0 += 1;
        e.1 += u32::from(r.correct);
    }
    m.into_iter().map(|(key, (t, c))| Breakdown { key, trials: t, correct: c, percent: percent(c, t) }).collect()
}

/// Writes one overlay PNG and one `guidance.v1` file per workflow step.
fn write_overlays(dir: &Path, entry: &CorpusEntry, task: &TaskFixture, a: &Analysis, dec: &Decomposition) -> std::io::Result<()> {
    let wf = Workflow::build(dec, a.vocabulary());
    let table = DataTable::from_regions(&a.regions.regions, &wf.vocabulary.categories);
    let trace = execute(dec, &table).ok();
    let steps = guidance::plan_workflow(&wf, &a.regions, &a.spec, trace.as_ref(), None)
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    std::fs::create_dir_all(dir)?;
    for (i, step) in steps.iter().enumerate() {
        let img = guidance::render_overlay(&entry.image, step, &a.regions);
        std::fs::write(dir.join(format!("{}_step{}.png", task.id, i + 1)), raster::encode_png(&img))?;
        std::fs::write(dir.join(format!("{}_step{}.json", task.id, i + 1)), step.to_json())?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct EvalOptions<'a> {
    pub seed: u64,
    pub trials: u32,
    pub backend: String,
    /// Where the first trial of each task writes its overlays.
    pub overlays: Option<&'a Path>,
}

/// Runs every task of `bank` `opts.trials` times. Failures are scored, not raised;
/// only rendering the corpus or writing overlays can fail.
pub fn run_eval(bank: &TaskBank, model: &dyn ModelClient, opts: &EvalOptions) -> Result<EvalReport, EvalError> {
    let corpus = corpus_from_bank(bank, opts.seed)?;
    let jobs: Vec<(&CorpusEntry, &TaskFixture, u32)> = bank
        .tasks
        .iter()
        .filter_map(|t| corpus.iter().find(|e| e.data.chart_id == t.chart_id).map(|e| (e, t)))
        .flat_map(|(e, t)| (1..=opts.trials).map(move |n| (e, t, n)))
        .collect();
    let trials: Vec<Trial> = jobs.par_iter().map(|(e, t, n)| run_trial(e, t, *n, model)).collect();
    if let Some(dir) = opts.overlays {
        for (trial, (e, t, _)) in trials.iter().zip(&jobs).filter(|(tr, _)| tr.row.trial == 1) {
            if let (Some(a), Some(d)) = (&trial.analysis, &trial.decomposition) {
                write_overlays(dir, e, t, a, d)?;
            }
        }
    }
    let mut rows: Vec<TrialRow> = trials.into_iter().map(|t| t.row).collect();
    let mut digests: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in &rows {
        digests.entry(r.task_id.clone()).or_default().push(r.digest.clone());
    }
    for r in &mut rows {
        r.deterministic = digests[&r.task_id].windows(2).all(|w| w[0] == w[1]);
    }
    let count = |f: fn(&TrialRow) -> bool| rows.iter().filter(|r| f(r)).count() as u32;
    let total = rows.len() as u32;
    let correct = count(|r| r.correct);
    Ok(EvalReport {
        schema_version: SchemaVersion,
        backend: opts.backend.clone(),
        seed: opts.seed,
        tasks: bank.tasks.len() as u32,
        trials_per_task: opts.trials,
        total_trials: total,
        correct,
        percent: percent(correct, total),
        g1_passed: count(|r| r.g1),
        g2_passed: count(|r| r.g2),
        g3_passed: count(|r| r.g3),
        deterministic: rows.iter().all(|r| r.deterministic),
        by_chart_type: breakdown(&rows, |r| r.chart_type.as_str().to_owned()),
        by_task_type: breakdown(&rows, |r| r.task_type.map_or("none".to_owned(), |t| t.as_str().to_owned())),
        rows,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{0}")]
    Synth(#[from] SynthError),
    #[error("writing overlays: {0}")]
    Io(#[from] std::io::Error),
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// JUnit XML with one test case per trial.
pub fn to_junit(report: &EvalReport) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!(
        "<testsuite name=\"chartguide-eval\" tests=\"{}\" failures=\"{}\">\n",
        report.total_trials,
        report.total_trials - report.correct
    ));
    for r in &report.rows {
        out.push_str(&format!(
            "  <testcase classname=\"{}\" name=\"{}#{}\"",
            xml_escape(r.chart_type.as_str()),
            xml_escape(&r.task_id),
            r.trial
        ));
        if r.correct {
            out.push_str("/>\n");
        } else {
            let msg = format!("G1={} G2={} G3={}", r.g1, r.g2, r.g3);
            out.push_str(&format!(
                ">\n    <failure message=\"{}\">{}</failure>\n  </testcase>\n",
                xml_escape(&msg),
                xml_escape(&r.failures.join("\n"))
            ));
        }
    }
    out.push_str("</testsuite>\n");
    out
}

/// Calibration of a detected axis, for callers holding only regions.
pub fn calibration(regions: &SemanticRegions, o: Orientation) -> Option<AxisCalibration> {
    regions.calibration(o)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelclient::MockModel;

    fn small_bank() -> TaskBank {
        let mut bank = TaskBank::bundled();
        bank.tasks.retain(|t| t.chart_id == "bar_basic");
        bank
    }

    #[test]
    fn rows_equal_tasks_times_trials() {
        let bank = small_bank();
        let mock = MockModel::from_corpus(7).unwrap();
        let opts = EvalOptions { seed: 7, trials: 2, backend: "mock".into(), overlays: None };
        let report = run_eval(&bank, &mock, &opts).unwrap();
        assert_eq!(report.total_trials as usize, bank.tasks.len() * 2);
        assert_eq!(report.rows.len() as u32, report.total_trials);
        assert!(report.deterministic);
        let sum: u32 = report.by_chart_type.iter().map(|b| b.trials).sum();
        assert_eq!(sum, report.total_trials);
        assert!(to_junit(&report).contains("<testsuite"));
    }

    #[test]
    fn percentages_round_to_hundredths() {
        assert_eq!(percent(192, 225), 85.33);
        assert_eq!(percent(0, 0), 0.0);
    }
}
