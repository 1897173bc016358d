//! Session service: a chart upload becomes a session that moves through
//! created, characterized, decomposed, in-progress and done. Sessions live in
//! a file store and survive restarts.

mod http;
mod store;

pub use http::{router, serve, ServiceConfig};
pub use store::{sha256_hex, JournalEntry, Store, StoreError};

use crate::decompose::{execute, DataTable, Decomposition};
use crate::doc::{Document, ParseError, SchemaVersion};
use crate::guidance::{self, GuidanceStep};
use crate::model::ChartSpec;
use crate::modelclient::ModelClient;
use crate::pipeline::{self, Analysis, PipelineError};
use crate::raster;
use crate::semantics::SemanticRegions;
use crate::workflow::{Edit, Workflow, WorkflowError};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

pub const DEFAULT_TTL: Duration = Duration::from_secs(24 * 60 * 60);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum SessionState {
    Created,
    Characterized,
    Decomposed,
    InProgress,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SessionMeta {
    pub schema_version: SchemaVersion,
    pub id: String,
    pub state: SessionState,
    pub created_at: u64,
    pub updated_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workflow_version: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_step: Option<u32>,
}

impl Document for SessionMeta {
    const SCHEMA: &'static str = "session.v1";
}

#[derive(Debug, Clone)]
struct Session {
    meta: SessionMeta,
    png: Vec<u8>,
    spec: Option<ChartSpec>,
    regions: Option<SemanticRegions>,
    decomposition: Option<Decomposition>,
    workflow: Option<Workflow>,
}

const META: &str = "session.json";
const CHART: &str = "chart.png";
const ANNOTATED: &str = "annotated.png";
const SPEC: &str = "chartspec.json";
const REGIONS: &str = "regions.json";
const DECOMPOSITION: &str = "decomposition.json";
const WORKFLOW: &str = "workflow.json";

/// Structured error with the HTTP status it maps to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl ApiError {
    pub fn new(status: u16, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, code: code.into(), message: message.into(), reason: None, path: None }
    }

    fn not_found(what: &str) -> Self {
        ApiError::new(404, "NOT_FOUND", format!("{what} not found"))
    }

    fn wrong_state(state: SessionState, action: &str) -> Self {
        let s = serde_json::to_value(state).expect("states serialize");
        ApiError::new(409, "WRONG_STATE", format!("cannot {action} while the session is {}", s.as_str().unwrap_or("?")))
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", self.status, self.code, self.message)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::new(500, e.code(), e.to_string())
    }
}

impl From<ParseError> for ApiError {
    fn from(e: ParseError) -> Self {
        ApiError { path: Some(e.path.clone()), ..ApiError::new(422, e.code(), e.to_string()) }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::Raster(_) => 422,
            PipelineError::Model(_) => 502,
            PipelineError::Decomp(d) if d.code() == "MODEL_ERROR" => 502,
            PipelineError::Semantics(s) if s.code() == "MODEL_ERROR" => 502,
            _ => 422,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<WorkflowError> for ApiError {
    fn from(e: WorkflowError) -> Self {
        let status = match e {
            WorkflowError::EditRejected { .. } => 422,
            WorkflowError::StaleVersion { .. } | WorkflowError::WorkflowComplete => 409,
        };
        ApiError { reason: e.reason().map(|r| r.code().to_owned()), ..ApiError::new(status, e.code(), e.to_string()) }
    }
}

impl From<guidance::GuidanceError> for ApiError {
    fn from(e: guidance::GuidanceError) -> Self {
        let status = if e.code() == "MODEL_ERROR" { 502 } else { 422 };
        ApiError::new(status, e.code(), e.to_string())
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn parse_doc<T: Document>(store: &Store, id: &str, file: &str) -> Result<Option<T>, ApiError> {
    match store.get(id, file)? {
        None => Ok(None),
        Some(bytes) => {
            let text = String::from_utf8_lossy(&bytes);
            T::from_json(&text).map(Some).map_err(|e| {
                StoreError::Corrupt { session: id.into(), file: file.into(), reason: e.to_string() }.into()
            })
        }
    }
}

/// The session engine behind the HTTP API. Each session has its own lock;
/// distinct sessions never contend.
pub struct Service {
    store: Store,
    model: Arc<dyn ModelClient>,
    ttl: Duration,
    sessions: Mutex<BTreeMap<String, Arc<Mutex<Session>>>>,
}

impl Service {
    pub fn new(store: Store, model: Arc<dyn ModelClient>) -> Self {
        Service { store, model, ttl: DEFAULT_TTL, sessions: Mutex::new(BTreeMap::new()) }
    }

    pub fn with_ttl(mut self, ttl: Duration) -> Self {
        self.ttl = ttl;
        self
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    fn expired(&self, meta: &SessionMeta) -> bool {
        now().saturating_sub(meta.updated_at) > self.ttl.as_secs()
    }

    fn restore(&self, id: &str) -> Result<Option<Session>, ApiError> {
        if !self.store.exists(id) {
            return Ok(None);
        }
        let Some(meta) = parse_doc::<SessionMeta>(&self.store, id, META)? else { return Ok(None) };
        if self.expired(&meta) {
            self.store.remove(id)?;
            return Ok(None);
        }
        let png = self.store.get(id, CHART)?.ok_or_else(|| StoreError::Corrupt {
            session: id.into(),
            file: CHART.into(),
            reason: "chart image is missing".into(),
        })?;
        Ok(Some(Session {
            spec: parse_doc(&self.store, id, SPEC)?,
            regions: parse_doc(&self.store, id, REGIONS)?,
            decomposition: parse_doc(&self.store, id, DECOMPOSITION)?,
            workflow: parse_doc(&self.store, id, WORKFLOW)?,
            meta,
            png,
        }))
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        let mut map = self.sessions.lock().expect("session map lock");
        if let Some(s) = map.get(id) {
            let expired = self.expired(&s.lock().expect("session lock").meta);
            if !expired {
                return Ok(s.clone());
            }
            map.remove(id);
            self.store.remove(id)?;
            return Err(ApiError::not_found("session"));
        }
        let s = Arc::new(Mutex::new(self.restore(id)?.ok_or_else(|| ApiError::not_found("session"))?));
        map.insert(id.to_owned(), s.clone());
        Ok(s)
    }

    fn persist(&self, s: &mut Session) -> Result<(), ApiError> {
        let at = now();
        s.meta.updated_at = at;
        s.meta.workflow_version = s.workflow.as_ref().map(|w| w.version);
        s.meta.active_step = s.workflow.as_ref().and_then(Workflow::active);
        let id = s.meta.id.clone();
        self.store.put(&id, CHART, &s.png, at)?;
        if let Some(d) = &s.spec {
            self.store.put(&id, SPEC, d.to_json().as_bytes(), at)?;
        }
        if let Some(d) = &s.regions {
            self.store.put(&id, REGIONS, d.to_json().as_bytes(), at)?;
        }
        if let Some(d) = &s.decomposition {
            self.store.put(&id, DECOMPOSITION, d.to_json().as_bytes(), at)?;
        }
        if let Some(d) = &s.workflow {
            self.store.put(&id, WORKFLOW, d.to_json().as_bytes(), at)?;
        }
        self.store.put(&id, META, s.meta.to_json().as_bytes(), at)?;
        Ok(())
    }

    /// Runs `f` on a copy of the session under its lock; the copy replaces
    /// the session and is persisted only when `f` succeeds.
    fn mutate<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<T, ApiError>) -> Result<T, ApiError> {
        let s = self.session(id)?;
        let mut guard = s.lock().expect("session lock");
        let mut next = guard.clone();
        let out = f(&mut next)?;
        self.persist(&mut next)?;
        *guard = next;
        Ok(out)
    }

    fn read<T>(&self, id: &str, f: impl FnOnce(&Session) -> Result<T, ApiError>) -> Result<T, ApiError> {
        let s = self.session(id)?;
        let snapshot = s.lock().expect("session lock").clone();
        f(&snapshot)
    }

    /// Stores the chart and characterizes it. The session exists (in state
    /// `created`) even when characterization fails.
    pub fn create(&self, png: Vec<u8>) -> Result<SessionMeta, ApiError> {
        let img = raster::decode_png(&png).map_err(|e| ApiError::new(422, "BAD_IMAGE", e.to_string()))?;
        let at = now();
        let id = uuid::Uuid::new_v4().simple().to_string();
        let meta = SessionMeta {
            schema_version: SchemaVersion,
            id: id.clone(),
            state: SessionState::Created,
            created_at: at,
            updated_at: at,
            question: None,
            workflow_version: None,
            active_step: None,
        };
        let mut session = Session { meta, png, spec: None, regions: None, decomposition: None, workflow: None };
        self.persist(&mut session)?;
        let slot = Arc::new(Mutex::new(session));
        self.sessions.lock().expect("session map lock").insert(id.clone(), slot);
        tracing::info!(session = %id, "chart uploaded");
        self.mutate(&id, |s| {
            let analysis: Analysis = pipeline::analyze_image(&img, &s.png, self.model.as_ref()).map_err(|e| {
                let mut err = ApiError::from(e);
                err.message = format!("{} (session {id})", err.message);
                err
            })?;
            s.spec = Some(analysis.spec);
            s.regions = Some(analysis.regions);
            self.store.put(&s.meta.id, ANNOTATED, &analysis.annotated_png, now())?;
            s.meta.state = SessionState::Characterized;
            Ok(())
        })?;
        self.meta(&id)
    }

    pub fn meta(&self, id: &str) -> Result<SessionMeta, ApiError> {
        self.read(id, |s| Ok(s.meta.clone()))
    }

    pub fn list(&self) -> Result<Vec<SessionMeta>, ApiError> {
        let mut out = Vec::new();
        for id in self.store.list()? {
            match self.meta(&id) {
                Ok(m) => out.push(m),
                Err(e) if e.status == 404 => {}
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }

    /// Decomposes a question; allowed until the first step is taken.
    pub fn ask(&self, id: &str, question: &str) -> Result<Workflow, ApiError> {
        self.mutate(id, |s| {
            if !matches!(s.meta.state, SessionState::Characterized | SessionState::Decomposed) {
                return Err(ApiError::wrong_state(s.meta.state, "ask a question"));
            }
            let (spec, regions) = (s.spec.as_ref().expect("characterized"), s.regions.as_ref().expect("characterized"));
            let (dec, wf) = pipeline::plan(spec, regions, question, self.model.as_ref())?;
            s.decomposition = Some(dec);
            s.workflow = Some(wf.clone());
            s.meta.question = Some(question.trim().to_owned());
            s.meta.state = SessionState::Decomposed;
            Ok(wf)
        })
    }

    pub fn regions(&self, id: &str) -> Result<SemanticRegions, ApiError> {
        self.read(id, |s| s.regions.clone().ok_or_else(|| ApiError::wrong_state(s.meta.state, "read regions")))
    }

    pub fn spec(&self, id: &str) -> Result<ChartSpec, ApiError> {
        self.read(id, |s| s.spec.clone().ok_or_else(|| ApiError::wrong_state(s.meta.state, "read the chart description")))
    }

    pub fn chart(&self, id: &str) -> Result<Vec<u8>, ApiError> {
        self.read(id, |s| Ok(s.png.clone()))
    }

    pub fn annotated(&self, id: &str) -> Result<Vec<u8>, ApiError> {
        self.store.get(id, ANNOTATED)?.ok_or_else(|| ApiError::not_found("annotated chart"))
    }

    pub fn workflow(&self, id: &str) -> Result<Workflow, ApiError> {
        self.read(id, |s| s.workflow.clone().ok_or_else(|| ApiError::wrong_state(s.meta.state, "read the workflow")))
    }

    pub fn edit(&self, id: &str, edit: &Edit) -> Result<Workflow, ApiError> {
        self.mutate(id, |s| {
            if !matches!(s.meta.state, SessionState::Decomposed | SessionState::InProgress) {
                return Err(ApiError::wrong_state(s.meta.state, "edit the workflow"));
            }
            let wf = s.workflow.as_ref().expect("decomposed").apply_edit(edit)?;
            s.decomposition = Some(wf.decomposition());
            s.workflow = Some(wf.clone());
            Ok(wf)
        })
    }

    pub fn advance(&self, id: &str) -> Result<Workflow, ApiError> {
        self.mutate(id, |s| {
            if !matches!(s.meta.state, SessionState::Decomposed | SessionState::InProgress | SessionState::Done) {
                return Err(ApiError::wrong_state(s.meta.state, "advance"));
            }
            let wf = s.workflow.as_ref().expect("decomposed").advance()?;
            s.meta.state = if wf.is_complete() { SessionState::Done } else { SessionState::InProgress };
            s.workflow = Some(wf.clone());
            Ok(wf)
        })
    }

    fn plan_step(&self, s: &Session, n: u32) -> Result<GuidanceStep, ApiError> {
        let wf = s.workflow.as_ref().ok_or_else(|| ApiError::wrong_state(s.meta.state, "read guidance"))?;
        let sub = wf.node(n).ok_or_else(|| ApiError::not_found("step"))?;
        let (regions, spec) = (s.regions.as_ref().expect("decomposed"), s.spec.as_ref().expect("decomposed"));
        let table = DataTable::from_regions(&regions.regions, &wf.vocabulary.categories);
        let trace = execute(&wf.decomposition(), &table).ok();
        Ok(guidance::plan_guidance(sub, regions, spec, trace.as_ref(), Some(self.model.as_ref()))?)
    }

    /// Guidance for step `n` (a subtask id) of the current workflow version.
    pub fn step(&self, id: &str, n: u32) -> Result<GuidanceStep, ApiError> {
        let (step, version) = self.read(id, |s| Ok((self.plan_step(s, n)?, s.workflow.as_ref().map_or(0, |w| w.version))))?;
        self.store.put(id, &format!("step-v{version}-{n}.json"), step.to_json().as_bytes(), now())?;
        Ok(step)
    }

    /// Overlay PNG for step `n`, cached per workflow version.
    pub fn overlay(&self, id: &str, n: u32) -> Result<Vec<u8>, ApiError> {
        let version = self.read(id, |s| Ok(s.workflow.as_ref().map(|w| w.version)))?;
        let file = format!("step-v{}-{n}.png", version.unwrap_or(0));
        if version.is_some() {
            if let Some(png) = self.store.get(id, &file)? {
                return Ok(png);
            }
        }
        let png = self.read(id, |s| {
            let step = self.plan_step(s, n)?;
            let img = raster::decode_png(&s.png).map_err(|e| ApiError::new(500, "BAD_IMAGE", e.to_string()))?;
            Ok(raster::encode_png(&guidance::render_overlay(&img, &step, s.regions.as_ref().expect("decomposed"))))
        })?;
        self.store.put(id, &file, &png, now())?;
        Ok(png)
    }

    /// Parses an `edit.v1` body.
    pub fn parse_edit(body: &str) -> Result<Edit, ApiError> {
        Ok(Edit::from_json(body)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelclient::MockModel;
    use crate::synth::{render, TaskBank};
    use crate::workflow::EditKind;

    fn service(dir: &std::path::Path, chart: &str) -> (Service, Vec<u8>, String) {
        let bank = TaskBank::bundled();
        let (img, gt) = render(bank.chart(chart).unwrap()).unwrap();
        let question = bank.tasks.iter().find(|t| t.chart_id == chart).unwrap().question.clone();
        let svc = Service::new(Store::open(dir).unwrap(), Arc::new(MockModel::new([gt])));
        (svc, raster::encode_png(&img), question)
    }

    #[test]
    fn olympic_happy_path_and_restart() {
        let dir = tempfile::tempdir().unwrap();
        let (svc, png, q) = service(dir.path(), "olympic");
        let meta = svc.create(png).unwrap();
        assert_eq!(meta.state, SessionState::Characterized);
        let wf = svc.ask(&meta.id, &q).unwrap();
        assert_eq!(wf.nodes.len(), 4);
        let wf = svc.advance(&meta.id).unwrap();
        let first = wf.active().unwrap();
        drop(svc);
        let (svc, _, _) = service(dir.path(), "olympic");
        let m = svc.meta(&meta.id).unwrap();
        assert_eq!(m.state, SessionState::InProgress);
        assert_eq!(svc.workflow(&meta.id).unwrap().active(), Some(first));
        assert!(!svc.overlay(&meta.id, first).unwrap().is_empty());
        for _ in 0..3 {
            svc.advance(&meta.id).unwrap();
        }
        assert_eq!(svc.meta(&meta.id).unwrap().state, SessionState::Done);
        assert_eq!(svc.advance(&meta.id).unwrap_err().code, "WORKFLOW_COMPLETE");
    }

    #[test]
    fn wrong_state_and_rejections() {
        let dir = tempfile::tempdir().unwrap();
        let (svc, png, q) = service(dir.path(), "olympic");
        let id = svc.create(png).unwrap().id;
        assert_eq!(svc.advance(&id).unwrap_err().status, 409);
        let wf = svc.ask(&id, &q).unwrap();
        let mut order = wf.order.clone();
        order.reverse();
        let err = svc.edit(&id, &Edit::new(Some(wf.version), EditKind::Reorder { order })).unwrap_err();
        assert_eq!((err.status, err.reason.as_deref()), (422, Some("DEP_ORDER_VIOLATION")));
        assert_eq!(svc.workflow(&id).unwrap(), wf);
        let stale = svc.edit(&id, &Edit::new(Some(wf.version + 5), EditKind::Reorder { order: wf.order.clone() })).unwrap_err();
        assert_eq!(stale.status, 409);
    }

    #[test]
    fn tampered_store_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let (svc, png, _) = service(dir.path(), "bar_basic");
        let id = svc.create(png).unwrap().id;
        drop(svc);
        std::fs::write(dir.path().join(&id).join(REGIONS), "{}").unwrap();
        let (svc, _, _) = service(dir.path(), "bar_basic");
        assert_eq!(svc.regions(&id).unwrap_err().code, "STORE_CORRUPT");
    }

    #[test]
    fn unknown_chart_stays_created() {
        let dir = tempfile::tempdir().unwrap();
        let (svc, _, q) = service(dir.path(), "bar_basic");
        let png = raster::encode_png(&raster::blank(40, 40, crate::model::Rgb::WHITE));
        let err = svc.create(png).unwrap_err();
        assert_eq!(err.status, 502);
        let listed = svc.list().unwrap();
        assert_eq!(listed.len(), 1);
        assert_eq!(listed[0].state, SessionState::Created);
        assert_eq!(svc.ask(&listed[0].id, &q).unwrap_err().status, 409);
    }
}
