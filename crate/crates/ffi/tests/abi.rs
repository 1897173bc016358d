use chartguide::doc::Document;
use chartguide::raster;
use chartguide::synth::{generate_corpus, TaskBank};
use chartguide::workflow::{Edit, EditKind, Workflow};
use chartguide_ffi::*;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

const SEED: u64 = 42;

unsafe fn take(s: *mut c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_owned();
    cg_string_free(s);
    out
}

unsafe fn last_error() -> String {
    CStr::from_ptr(cg_last_error()).to_str().unwrap().to_owned()
}

unsafe fn workflow(s: *mut CgSession) -> Workflow {
    let mut out = ptr::null_mut();
    assert_eq!(cg_session_workflow_json(s, &mut out), CgStatus::Ok);
    Workflow::from_json(&take(out)).unwrap()
}

#[test]
fn olympic_session_through_the_c_abi() {
    let png = generate_corpus(SEED)
        .unwrap()
        .into_iter()
        .find(|e| e.data.chart_id == "olympic")
        .map(|e| raster::encode_png(&e.image))
        .unwrap();
    let question = TaskBank::bundled().tasks.into_iter().find(|t| t.chart_id == "olympic").unwrap().question;
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(cg_model_mock_new(SEED, &mut model), CgStatus::Ok);
        let mut s = ptr::null_mut();
        assert_eq!(cg_session_new(model, png.as_ptr(), png.len(), &mut s), CgStatus::Ok);
        cg_model_free(model);

        let mut regions = ptr::null_mut();
        assert_eq!(cg_session_regions_json(s, &mut regions), CgStatus::Ok);
        assert!(chartguide::semantics::SemanticRegions::from_json(&take(regions)).is_ok());

        let mut out = ptr::null_mut();
        assert_eq!(cg_session_workflow_json(s, &mut out), CgStatus::WrongState);
        let q = CString::new(question).unwrap();
        assert_eq!(cg_session_ask(s, q.as_ptr()), CgStatus::Ok);
        let wf = workflow(s);
        assert_eq!(wf.nodes.len(), 4);

        let mut reversed = wf.order.clone();
        reversed.reverse();
        let bad = CString::new(Edit::new(Some(wf.version), EditKind::Reorder { order: reversed }).to_json()).unwrap();
        assert_eq!(cg_session_edit(s, bad.as_ptr()), CgStatus::EditRejected);
        assert!(last_error().contains("DEP_ORDER_VIOLATION"));
        assert_eq!(workflow(s), wf);
        let stale = CString::new(Edit::new(Some(wf.version + 7), EditKind::Reorder { order: wf.order.clone() }).to_json()).unwrap();
        assert_eq!(cg_session_edit(s, stale.as_ptr()), CgStatus::StaleVersion);

        for id in wf.order.clone() {
            let mut step = ptr::null_mut();
            assert_eq!(cg_session_step_json(s, id, &mut step), CgStatus::Ok);
            assert_eq!(chartguide::guidance::GuidanceStep::from_json(&take(step)).unwrap().subtask_id, id);
            let mut buf = CgBuffer { data: ptr::null_mut(), len: 0 };
            assert_eq!(cg_session_overlay_png(s, id, &mut buf), CgStatus::Ok);
            let bytes = std::slice::from_raw_parts(buf.data, buf.len);
            assert!(raster::decode_png(bytes).is_ok());
            cg_buffer_free(buf);
            assert_eq!(cg_session_advance(s), CgStatus::Ok);
        }
        assert!(workflow(s).is_complete());
        assert_eq!(cg_session_advance(s), CgStatus::WorkflowComplete);
        cg_session_free(s);
    }
}

#[test]
fn bad_arguments_report_status_and_message() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(cg_model_mock_new(SEED, &mut model), CgStatus::Ok);
        let mut s = ptr::null_mut();
        assert_eq!(cg_session_new(model, ptr::null(), 0, &mut s), CgStatus::NullArgument);
        assert!(last_error().contains("png"));
        let junk = [1u8, 2, 3];
        assert_eq!(cg_session_new(model, junk.as_ptr(), junk.len(), &mut s), CgStatus::BadImage);
        assert_eq!(cg_session_new(ptr::null(), junk.as_ptr(), junk.len(), &mut s), CgStatus::NullArgument);
        assert_eq!(cg_session_advance(ptr::null_mut()), CgStatus::NullArgument);
        let missing = CString::new("/no/such/cassette.json").unwrap();
        let mut m2 = ptr::null_mut();
        assert_eq!(cg_model_cassette_open(missing.as_ptr(), &mut m2), CgStatus::Io);
        assert_eq!(cg_model_mock_new(SEED, &mut m2), CgStatus::Ok);
        assert!(cg_last_error().is_null());
        cg_model_free(m2);
        cg_model_free(model);
        cg_session_free(ptr::null_mut());
        assert_eq!(CStr::from_ptr(cg_version()).to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn header_declares_the_api_and_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/chartguide.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["cg_session_new", "cg_session_overlay_png", "cg_last_error", "CG_STATUS_EDIT_REJECTED", "typedef struct CgSession CgSession"] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(&src, format!("#include \"{}\"\nint main(void) {{ return CG_STATUS_OK; }}\n", header.display())).unwrap();
    match Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"]).arg(&src).output() {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(e) => eprintln!("no C compiler available, skipping compile check: {e}"),
    }
}
