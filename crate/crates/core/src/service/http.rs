use super::{ApiError, Service, Store};
use crate::doc::{parse_strict, Document};
use crate::modelclient::ModelClient;
use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Deserialize;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use tower_http::cors::{Any, CorsLayer};

const MAX_UPLOAD: usize = 32 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub store: PathBuf,
    /// Allowed browser origin; any origin when unset.
    pub cors_origin: Option<String>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = serde_json::to_string(&self).expect("errors serialize");
        (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

fn json(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn doc<T: Document>(d: &T) -> Response {
    json(StatusCode::OK, d.to_json())
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

/// Runs blocking pipeline work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.unwrap_or_else(|e| Err(ApiError::new(500, "INTERNAL", e.to_string())))
}

type Svc = State<Arc<Service>>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuestionBody {
    text: String,
}

async fn upload(State(svc): Svc, body: Bytes) -> Result<Response, ApiError> {
    let meta = blocking(move || svc.create(body.to_vec())).await?;
    Ok(json(StatusCode::CREATED, meta.to_json()))
}

async fn list(State(svc): Svc) -> Result<Response, ApiError> {
    let all = blocking(move || svc.list()).await?;
    Ok(json(StatusCode::OK, crate::doc::to_canonical_json(&all)))
}

async fn meta(State(svc): Svc, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(doc(&blocking(move || svc.meta(&id)).await?))
}

async fn chart(State(svc): Svc, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(png(blocking(move || svc.chart(&id)).await?))
}

async fn annotated(State(svc): Svc, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(png(blocking(move || svc.annotated(&id)).await?))
}

async fn spec(State(svc): Svc, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(doc(&blocking(move || svc.spec(&id)).await?))
}

async fn question(State(svc): Svc, Path(id): Path<String>, body: String) -> Result<Response, ApiError> {
    let q: QuestionBody = parse_strict("question", &body)?;
    Ok(doc(&blocking(move || svc.ask(&id, &q.text)).await?))
}

async fn regions(State(svc): Svc, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(doc(&blocking(move || svc.regions(&id)).await?))
}

async fn workflow(State(svc): Svc, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(doc(&blocking(move || svc.workflow(&id)).await?))
}

async fn edit(State(svc): Svc, Path(id): Path<String>, body: String) -> Result<Response, ApiError> {
    let e = Service::parse_edit(&body)?;
    Ok(doc(&blocking(move || svc.edit(&id, &e)).await?))
}

async fn advance(State(svc): Svc, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(doc(&blocking(move || svc.advance(&id)).await?))
}

async fn step(State(svc): Svc, Path((id, n)): Path<(String, u32)>) -> Result<Response, ApiError> {
    Ok(doc(&blocking(move || svc.step(&id, n)).await?))
}

async fn overlay(State(svc): Svc, Path((id, n)): Path<(String, u32)>) -> Result<Response, ApiError> {
    Ok(png(blocking(move || svc.overlay(&id, n)).await?))
}

async fn health() -> &'static str {
    "ok"
}

fn cors(origin: Option<&str>) -> CorsLayer {
    let layer = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    match origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(o) => layer.allow_origin(o),
        None => layer.allow_origin(Any),
    }
}

pub fn router(svc: Arc<Service>, cors_origin: Option<&str>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/charts", post(upload))
        .route("/sessions", get(list))
        .route("/sessions/{id}", get(meta))
        .route("/sessions/{id}/chart", get(chart))
        .route("/sessions/{id}/annotated", get(annotated))
        .route("/sessions/{id}/spec", get(spec))
        .route("/sessions/{id}/question", post(question))
        .route("/sessions/{id}/regions", get(regions))
        .route("/sessions/{id}/workflow", get(workflow).patch(edit))
        .route("/sessions/{id}/advance", post(advance))
        .route("/sessions/{id}/steps/{n}", get(step))
        .route("/sessions/{id}/steps/{n}/overlay", get(overlay))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .layer(cors(cors_origin))
        .with_state(svc)
}

/// Serves until ctrl-c.
pub async fn serve(cfg: ServiceConfig, model: Arc<dyn ModelClient>) -> std::io::Result<()> {
    let store = Store::open(&cfg.store).map_err(|e| std::io::Error::other(e.to_string()))?;
    let svc = Arc::new(Service::new(store, model));
    let app = router(svc, cfg.cors_origin.as_deref());
    let listener = tokio::net::TcpListener::bind(cfg.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, store = %cfg.store.display(), "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
