use super::{Capability, ModelClient, ModelError, ModelErrorKind, ModelRequest, ModelResponse};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;
use std::time::{Duration, Instant};

pub const ENV_URL: &str = "CHARTGUIDE_MODEL_URL";
pub const ENV_TOKEN: &str = "CHARTGUIDE_MODEL_TOKEN";
pub const ENV_NAME: &str = "CHARTGUIDE_MODEL_NAME";
pub const ENV_TIMEOUT: &str = "CHARTGUIDE_MODEL_TIMEOUT_MS";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub url: String,
    #[serde(default)]
    pub token: Option<String>,
    #[serde(default)]
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_timeout() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    2
}

fn default_backoff() -> u64 {
    250
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> Self {
        RemoteConfig {
            url: url.into(),
            token: None,
            model: String::new(),
            timeout_ms: default_timeout(),
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
        }
    }

    pub fn from_env() -> Result<Self, String> {
        let url = std::env::var(ENV_URL).map_err(|_| format!("{ENV_URL} is not set"))?;
        let mut cfg = RemoteConfig::new(url);
        cfg.token = std::env::var(ENV_TOKEN).ok();
        cfg.model = std::env::var(ENV_NAME).unwrap_or_default();
        if let Ok(t) = std::env::var(ENV_TIMEOUT) {
            cfg.timeout_ms = t.parse().map_err(|_| format!("{ENV_TIMEOUT} must be milliseconds"))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Reference prompt per capability. Not normative: any prompt that makes the
/// model answer with the capability's JSON payload will do.
pub fn reference_prompt(cap: Capability) -> &'static str {
    match cap {
        Capability::Characterize => {
            "Describe this chart as JSON: chart_type, shape_class, axes (name, orientation, scale, ticks with pixel \
             and value, pixel_span, position), series (name, channel) and image_size."
        }
        Capability::LabelRegions => {
            "The image carries numbered badges. For every listed region id return role and a short label such as \
             'Gold medal for the USA', plus series and category for data marks."
        }
        Capability::DecomposeStage1 => {
            "Break the question into steps, each typed with one of: retrieve-value, filter, compute-derived-value, \
             find-extremum, sort, determine-range, characterize-distribution, find-anomalies, cluster, correlate."
        }
        Capability::DecomposeStage2 => {
            "Split abstract steps into atomic ones and ground each step in region ids or an axis. Keep the order."
        }
        Capability::DecomposeStage3 => {
            "Check the structure, set dependencies between steps that consume each other's results and drop repeated \
             steps. Return the final decomposition."
        }
        Capability::ValidateFlow => "Is this edited workflow logically consistent? Answer consistent or inconsistent with a note.",
        Capability::PhraseInstruction => "Rephrase the instruction for a novice chart reader without changing its meaning.",
    }
}

#[derive(Serialize)]
struct Wire<'a> {
    capability: Capability,
    model: &'a str,
    prompt: &'a str,
    payload: &'a Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_base64: Option<String>,
}

/// Provider-agnostic HTTP adapter: one JSON POST per call, retried on
/// transport failures, timeouts and 5xx replies.
pub struct RemoteModel {
    cfg: RemoteConfig,
    agent: ureq::Agent,
}

enum Attempt {
    Retry(ModelErrorKind),
    Fail(ModelErrorKind),
}

impl RemoteModel {
    pub fn new(cfg: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteModel { cfg, agent }
    }

    fn attempt(&self, body: &str) -> Result<String, Attempt> {
        let mut req = self.agent.post(&self.cfg.url).header("Content-Type", "application/json");
        if let Some(t) = &self.cfg.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req.send(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => Attempt::Retry(ModelErrorKind::Timeout),
            other => Attempt::Retry(ModelErrorKind::Transport { message: other.to_string() }),
        })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(ModelErrorKind::Transport { message: e.to_string() }))?;
        match status {
            200..=299 => Ok(text),
            500..=599 => Err(Attempt::Retry(ModelErrorKind::Transport { message: format!("HTTP {status}") })),
            _ => Err(Attempt::Fail(ModelErrorKind::Transport { message: format!("HTTP {status}: {text}") })),
        }
    }
}

impl ModelClient for RemoteModel {
    fn backend_id(&self) -> String {
        format!("remote:{}", self.cfg.model)
    }

    fn call(&self, req: &ModelRequest) -> Result<ModelResponse, ModelError> {
        use base64::Engine;
        let wire = Wire {
            capability: req.capability,
            model: &self.cfg.model,
            prompt: reference_prompt(req.capability),
            payload: &req.payload,
            image_base64: req.image.as_ref().map(|b| base64::engine::general_purpose::STANDARD.encode(b)),
        };
        let body = serde_json::to_string(&wire).expect("wire format serializes");
        let started = Instant::now();
        let mut attempt = 0;
        let text = loop {
            match self.attempt(&body) {
                Ok(text) => break text,
                Err(Attempt::Fail(kind)) => return Err(ModelError::new(req.capability, kind)),
                Err(Attempt::Retry(kind)) => {
                    if attempt >= self.cfg.max_retries {
                        return Err(ModelError::new(req.capability, kind));
                    }
                    tracing::warn!(attempt, error = kind.tag(), "model call failed, retrying");
                    std::thread::sleep(Duration::from_millis(self.cfg.backoff_ms << attempt));
                    attempt += 1;
                }
            }
        };
        let schema = |path: &str, message: String| ModelError::new(req.capability, ModelErrorKind::SchemaViolation { path: path.into(), message });
        let reply: Value = serde_json::from_str(&text).map_err(|e| schema("", format!("reply is not JSON: {e}")))?;
        let payload = reply.get("payload").cloned().ok_or_else(|| schema("payload", "missing field `payload`".into()))?;
        Ok(ModelResponse { payload, latency_ms: started.elapsed().as_millis() as u64, backend: self.backend_id() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelclient::{decode_payload, LabelResponse};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Serves `replies` in turn, one per connection, and counts requests.
    fn server(replies: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/model", listener.local_addr().unwrap());
        let count = Arc::new(AtomicUsize::new(0));
        let seen = count.clone();
        std::thread::spawn(move || {
            for (i, stream) in listener.incoming().enumerate() {
                let mut stream = stream.unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                seen.fetch_add(1, Ordering::SeqCst);
                let (status, text) = replies[i.min(replies.len() - 1)].clone();
                let resp = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                    text.len()
                );
                stream.write_all(resp.as_bytes()).unwrap();
            }
        });
        (url, count)
    }

    fn client(url: String) -> RemoteModel {
        let mut cfg = RemoteConfig::new(url);
        cfg.backoff_ms = 1;
        cfg.timeout_ms = 5_000;
        RemoteModel::new(cfg)
    }

    fn label_req() -> ModelRequest {
        ModelRequest { capability: Capability::LabelRegions, payload: serde_json::json!({}), image: Some(vec![1, 2]) }
    }

    #[test]
    fn malformed_reply_names_the_path() {
        let (url, _) = server(vec![(200, r#"{"payload":{"labels":[{"id":1,"role":"data-mark","label":7}]}}"#.into())]);
        let resp = client(url).call(&label_req()).unwrap();
        let err = decode_payload::<LabelResponse>(Capability::LabelRegions, &resp.payload).unwrap_err();
        match err.kind {
            ModelErrorKind::SchemaViolation { path, .. } => assert_eq!(path, "labels[0].label"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reply_without_payload_is_a_schema_violation() {
        let (url, _) = server(vec![(200, r#"{"labels":[]}"#.into())]);
        let err = client(url).call(&label_req()).unwrap_err();
        assert_eq!(err.kind.tag(), "schema-violation");
    }

    #[test]
    fn server_errors_are_retried_twice() {
        let (url, count) = server(vec![(503, "{}".into())]);
        let err = client(url).call(&label_req()).unwrap_err();
        assert_eq!(err.kind.tag(), "transport");
        assert_eq!(count.load(Ordering::SeqCst), 3);
        let (url, count) = server(vec![(503, "{}".into()), (200, r#"{"payload":{"labels":[]}}"#.into())]);
        assert!(client(url).call(&label_req()).is_ok());
        assert_eq!(count.load(Ordering::SeqCst), 2);
    }
}
