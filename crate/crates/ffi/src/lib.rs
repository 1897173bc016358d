//! C ABI over the chartguide pipeline.
//!
//! Handles are opaque pointers created by `cg_*_new`/`cg_*_open` and released
//! by the matching `_free`. Every fallible call returns a [`CgStatus`]; on
//! failure `cg_last_error()` describes the error until the next call on the
//! same thread. Strings and buffers handed out by the library belong to the
//! caller and are released with `cg_string_free` / `cg_buffer_free`.
//! A session handle must not be used from two threads at once; model handles
//! may be shared.

use chartguide::decompose::{execute, DataTable};
use chartguide::doc::Document;
use chartguide::guidance::{self, GuidanceStep};
use chartguide::modelclient::{Cassette, MockModel, ModelClient};
use chartguide::pipeline::{self, Analysis, PipelineError};
use chartguide::raster::{self, Image};
use chartguide::workflow::{Edit, Workflow, WorkflowError};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    BadImage = 3,
    Model = 4,
    Pipeline = 5,
    Parse = 6,
    EditRejected = 7,
    StaleVersion = 8,
    WorkflowComplete = 9,
    WrongState = 10,
    NotFound = 11,
    Io = 12,
    Panic = 13,
}

/// Bytes owned by the library.
#[repr(C)]
#[derive(Debug)]
pub struct CgBuffer {
    pub data: *mut u8,
    pub len: usize,
}

/// A model backend.
pub struct CgModel {
    client: Arc<dyn ModelClient>,
}

/// One analysed chart with its current workflow.
pub struct CgSession {
    model: Arc<dyn ModelClient>,
    image: Image,
    analysis: Analysis,
    workflow: Option<Workflow>,
}

struct Failure(CgStatus, String);

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let status = match e {
            PipelineError::Raster(_) => CgStatus::BadImage,
            PipelineError::Model(_) => CgStatus::Model,
            _ => CgStatus::Pipeline,
        };
        Failure(status, format!("{}: {e}", e.stage()))
    }
}

impl From<WorkflowError> for Failure {
    fn from(e: WorkflowError) -> Self {
        let status = match e {
            WorkflowError::EditRejected { .. } => CgStatus::EditRejected,
            WorkflowError::StaleVersion { .. } => CgStatus::StaleVersion,
            WorkflowError::WorkflowComplete => CgStatus::WorkflowComplete,
        };
        Failure(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CgStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CgStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CgStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(CgStatus::NullArgument, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(CgStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(CgStatus::Pipeline, "document contains a nul byte".into()))?;
    put(out, c.into_raw(), "out")
}

unsafe fn live<'a>(s: *mut CgSession) -> Result<&'a mut CgSession, Failure> {
    s.as_mut().ok_or_else(|| null("session"))
}

impl CgSession {
    fn workflow(&self) -> Result<&Workflow, Failure> {
        self.workflow.as_ref().ok_or_else(|| Failure(CgStatus::WrongState, "no question has been asked".into()))
    }

    fn step(&self, subtask: u32) -> Result<GuidanceStep, Failure> {
        let wf = self.workflow()?;
        let sub = wf.node(subtask).ok_or_else(|| Failure(CgStatus::NotFound, format!("no subtask {subtask}")))?;
        let regions = &self.analysis.regions;
        let table = DataTable::from_regions(&regions.regions, &wf.vocabulary.categories);
        let trace = execute(&wf.decomposition(), &table).ok();
        guidance::plan_guidance(sub, regions, &self.analysis.spec, trace.as_ref(), Some(self.model.as_ref()))
            .map_err(|e| Failure(CgStatus::Pipeline, e.to_string()))
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next library call on this thread.
#[no_mangle]
pub extern "C" fn cg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Deterministic mock backend that knows the bundled corpus rendered with `seed`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn cg_model_mock_new(seed: u64, out: *mut *mut CgModel) -> CgStatus {
    guard(|| {
        let mock = MockModel::from_corpus(seed).map_err(|e| Failure(CgStatus::Pipeline, e.to_string()))?;
        put(out, Box::into_raw(Box::new(CgModel { client: Arc::new(mock) })), "out")
    })
}

/// Mock backend reading `*.groundtruth.json` files from `dir`.
///
/// # Safety
/// `dir` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cg_model_mock_from_dir(dir: *const c_char, out: *mut *mut CgModel) -> CgStatus {
    guard(|| {
        let dir = text(dir, "dir")?;
        let mock = MockModel::from_dir(Path::new(dir)).map_err(|e| Failure(CgStatus::Io, e.to_string()))?;
        put(out, Box::into_raw(Box::new(CgModel { client: Arc::new(mock) })), "out")
    })
}

/// Replays a recorded cassette; unrecorded requests fail.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cg_model_cassette_open(path: *const c_char, out: *mut *mut CgModel) -> CgStatus {
    guard(|| {
        let path = text(path, "path")?;
        let cassette = Cassette::replay(path).map_err(|e| Failure(CgStatus::Io, e.to_string()))?;
        put(out, Box::into_raw(Box::new(CgModel { client: Arc::new(cassette) })), "out")
    })
}

/// # Safety
/// `model` must come from a `cg_model_*` constructor, or be null.
#[no_mangle]
pub unsafe extern "C" fn cg_model_free(model: *mut CgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Analyses a PNG chart. The session keeps its own reference to the model.
///
/// # Safety
/// `png` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cg_session_new(model: *const CgModel, png: *const u8, len: usize, out: *mut *mut CgSession) -> CgStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if png.is_null() {
            return Err(null("png"));
        }
        let bytes = std::slice::from_raw_parts(png, len);
        let image = raster::decode_png(bytes).map_err(PipelineError::from)?;
        let analysis = pipeline::analyze_image(&image, bytes, model.client.as_ref())?;
        let s = CgSession { model: model.client.clone(), image, analysis, workflow: None };
        put(out, Box::into_raw(Box::new(s)), "out")
    })
}

/// # Safety
/// `session` must come from `cg_session_new`, or be null.
#[no_mangle]
pub unsafe extern "C" fn cg_session_free(session: *mut CgSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// `chartspec.v1` document.
///
/// # Safety
/// `session` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cg_session_spec_json(session: *mut CgSession, out: *mut *mut c_char) -> CgStatus {
    guard(|| put_string(out, live(session)?.analysis.spec.to_json()))
}

/// `semantic_regions.v1` document.
///
/// # Safety
/// `session` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cg_session_regions_json(session: *mut CgSession, out: *mut *mut c_char) -> CgStatus {
    guard(|| put_string(out, live(session)?.analysis.regions.to_json()))
}

/// Decomposes `question` and replaces the session's workflow.
///
/// # Safety
/// `session` must be live; `question` must be a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cg_session_ask(session: *mut CgSession, question: *const c_char) -> CgStatus {
    guard(|| {
        let s = live(session)?;
        let q = text(question, "question")?;
        let (_, wf) = pipeline::plan(&s.analysis.spec, &s.analysis.regions, q, s.model.as_ref())?;
        s.workflow = Some(wf);
        Ok(())
    })
}

/// `workflow.v1` document.
///
/// # Safety
/// `session` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cg_session_workflow_json(session: *mut CgSession, out: *mut *mut c_char) -> CgStatus {
    guard(|| put_string(out, live(session)?.workflow()?.to_json()))
}

/// Applies an `edit.v1` document. A rejected edit leaves the workflow unchanged.
///
/// # Safety
/// `session` must be live; `edit_json` must be a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cg_session_edit(session: *mut CgSession, edit_json: *const c_char) -> CgStatus {
    guard(|| {
        let s = live(session)?;
        let edit = Edit::from_json(text(edit_json, "edit_json")?).map_err(|e| Failure(CgStatus::Parse, e.to_string()))?;
        let next = s.workflow()?.apply_edit(&edit)?;
        s.workflow = Some(next);
        Ok(())
    })
}

/// Completes the active step and activates the next one.
///
/// # Safety
/// `session` must be live.
#[no_mangle]
pub unsafe extern "C" fn cg_session_advance(session: *mut CgSession) -> CgStatus {
    guard(|| {
        let s = live(session)?;
        let next = s.workflow()?.advance()?;
        s.workflow = Some(next);
        Ok(())
    })
}

/// `guidance.v1` document for the subtask with id `subtask`.
///
/// # Safety
/// `session` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cg_session_step_json(session: *mut CgSession, subtask: u32, out: *mut *mut c_char) -> CgStatus {
    guard(|| put_string(out, live(session)?.step(subtask)?.to_json()))
}

/// Overlay PNG for the subtask with id `subtask`.
///
/// # Safety
/// `session` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cg_session_overlay_png(session: *mut CgSession, subtask: u32, out: *mut CgBuffer) -> CgStatus {
    guard(|| {
        let s = live(session)?;
        let step = s.step(subtask)?;
        let png = raster::encode_png(&guidance::render_overlay(&s.image, &step, &s.analysis.regions));
        let mut boxed = png.into_boxed_slice();
        let buf = CgBuffer { data: boxed.as_mut_ptr(), len: boxed.len() };
        std::mem::forget(boxed);
        put(out, buf, "out")
    })
}

/// # Safety
/// `s` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn cg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `buf` must have been filled by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn cg_buffer_free(buf: CgBuffer) {
    if !buf.data.is_null() {
        drop(Box::from_raw(std::ptr::slice_from_raw_parts_mut(buf.data, buf.len)));
    }
}
