mod common;

use chartguide::modelclient::{Cassette, ModelClient};
use chartguide::pipeline::{analyze, plan, PipelineError};
use chartguide::raster;
use chartguide::synth::TaskBank;
use std::path::PathBuf;

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/olympic.cassette.json")
}

fn question() -> String {
    TaskBank::bundled().tasks.into_iter().find(|t| t.chart_id == "olympic").unwrap().question
}

fn session(model: &dyn ModelClient, q: &str) -> Result<String, PipelineError> {
    let png = raster::encode_png(&common::entry("olympic").image);
    let a = analyze(&png, model)?;
    let (d, wf) = plan(&a.spec, &a.regions, q, model)?;
    Ok(format!("{}{}{}", serde_json::to_string(&a.regions).unwrap(), serde_json::to_string(&d).unwrap(), serde_json::to_string(&wf).unwrap()))
}

#[test]
fn committed_cassette_replays_the_mock_session() {
    if std::env::var_os("CHARTGUIDE_BLESS").is_some() {
        let tmp = fixture().with_extension("tmp");
        let _ = std::fs::remove_file(&tmp);
        let rec = Cassette::record(&tmp, Box::new(common::mock())).unwrap();
        session(&rec, &question()).unwrap();
        std::fs::rename(&tmp, fixture()).unwrap();
    }
    let replay = Cassette::replay(fixture()).expect("fixture cassette; regenerate with CHARTGUIDE_BLESS=1");
    assert!(!replay.is_empty());
    assert_eq!(session(&replay, &question()).unwrap(), session(&common::mock(), &question()).unwrap());
}

#[test]
fn unrecorded_request_is_a_cassette_miss() {
    let replay = Cassette::replay(fixture()).unwrap();
    let err = session(&replay, "Which country won the fewest bronze medals?").unwrap_err();
    assert_eq!(err.code(), "MODEL_ERROR");
    assert!(err.to_string().contains("cassette-miss"), "{err}");
}

#[test]
fn recording_appends_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    let rec = Cassette::record(&path, Box::new(common::mock())).unwrap();
    let live = session(&rec, &question()).unwrap();
    let n = rec.len();
    assert!(n > 0);
    drop(rec);
    assert_eq!(session(&Cassette::replay(&path).unwrap(), &question()).unwrap(), live);
    let again = Cassette::record(&path, Box::new(common::mock())).unwrap();
    session(&again, &question()).unwrap();
    assert_eq!(again.len(), n);
}
