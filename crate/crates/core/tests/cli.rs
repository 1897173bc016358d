mod common;

use chartguide::doc::Document;
use chartguide::eval::EvalReport;
use chartguide::guidance::GuidanceStep;
use chartguide::raster;
use chartguide::semantics::SemanticRegions;
use chartguide::synth::{GroundTruth, TaskBank};
use chartguide::workflow::Workflow;
use chartguide::Role;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chartguide")).args(args).env("CHARTGUIDE_LOG", "warn").output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_detect_decompose_guide() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    assert_eq!(run(&["synth", "--seed", "42", "--out", path(&corpus)]).status.code(), Some(0));
    let truth = GroundTruth::from_json(&std::fs::read_to_string(corpus.join("bar_basic.groundtruth.json")).unwrap()).unwrap();

    let s = dir.path().join("session");
    std::fs::create_dir_all(&s).unwrap();
    std::fs::copy(corpus.join("bar_basic.png"), s.join("chart.png")).unwrap();
    let out = run(&[
        "detect",
        path(&s.join("chart.png")),
        "--out",
        path(&s.join("regions.json")),
        "--spec-out",
        path(&s.join("chartspec.json")),
        "--annotated-out",
        path(&s.join("annotated.png")),
        "--truth",
        path(&corpus),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let regions = SemanticRegions::from_json(&std::fs::read_to_string(s.join("regions.json")).unwrap()).unwrap();
    for gt in truth.data_marks() {
        let best = regions.regions.iter().map(|r| r.mask.iou(&gt.mask)).fold(0.0, f64::max);
        assert!(best >= 0.9, "mark {} best IoU {best}", gt.label);
        let hit = regions.regions.iter().find(|r| r.mask.iou(&gt.mask) == best).unwrap();
        assert_eq!((hit.role, hit.category.as_deref()), (Role::DataMark, gt.category.as_deref()));
    }
    for t in &truth.text_elements {
        assert!(regions.regions.iter().any(|r| r.bbox == t.bbox && r.text.as_deref() == Some(t.text.as_str())), "text {}", t.text);
    }
    assert!(raster::decode_png(&std::fs::read(s.join("annotated.png")).unwrap()).is_ok());

    let question = TaskBank::bundled().tasks.into_iter().find(|t| t.chart_id == "bar_basic").unwrap().question;
    let out = run(&[
        "decompose",
        "--spec",
        path(&s.join("chartspec.json")),
        "--regions",
        path(&s.join("regions.json")),
        "--question",
        &question,
        "--out",
        path(&s.join("decomposition.json")),
        "--workflow-out",
        path(&s.join("workflow.json")),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let wf = Workflow::from_json(&std::fs::read_to_string(s.join("workflow.json")).unwrap()).unwrap();

    assert_eq!(run(&["guide", path(&s)]).status.code(), Some(0));
    for n in 1..=wf.nodes.len() {
        let png = std::fs::read(s.join(format!("guidance/step{n}.png"))).unwrap();
        assert!(raster::decode_png(&png).is_ok());
        GuidanceStep::from_json(&std::fs::read_to_string(s.join(format!("guidance/step{n}.json"))).unwrap()).unwrap();
    }
    assert!(!s.join(format!("guidance/step{}.png", wf.nodes.len() + 1)).exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["detect", "/no/such/chart.png", "--out", "r.json"]).status.code(), Some(2));
    assert_eq!(run(&["eval", "--backend", "psychic"]).status.code(), Some(2));
    assert_eq!(run(&["guide", "/no/such/dir"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));

    let blank = dir.path().join("blank.png");
    std::fs::write(&blank, raster::encode_png(&raster::blank(64, 48, chartguide::model::Rgb([255, 255, 255])))).unwrap();
    let out = run(&["detect", path(&blank), "--out", path(&dir.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("characterize"), "{}", String::from_utf8_lossy(&out.stderr));

    let junk = dir.path().join("junk.png");
    std::fs::write(&junk, b"not a png").unwrap();
    assert_eq!(run(&["detect", path(&junk), "--out", path(&dir.path().join("r.json"))]).status.code(), Some(1));
}

#[test]
fn eval_writes_report_and_junit() {
    let dir = tempfile::tempdir().unwrap();
    let (report, junit) = (dir.path().join("report.json"), dir.path().join("report.xml"));
    let out = run(&["eval", "--trials", "1", "--seed", "42", "--out", path(&report), "--junit", path(&junit)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = EvalReport::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!((r.total_trials, r.rows.len()), (45, 45));
    let xml = std::fs::read_to_string(&junit).unwrap();
    assert_eq!(xml.matches("<testcase").count(), 45);
}

#[test]
fn schemas_subcommand_matches_committed_files() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["schemas", "--out", path(dir.path())]).status.code(), Some(0));
    let committed = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas");
    for (name, _) in chartguide::schemas::all() {
        let f = format!("{name}.json");
        assert_eq!(std::fs::read(dir.path().join(&f)).unwrap(), std::fs::read(committed.join(&f)).unwrap(), "{f}");
    }
}
