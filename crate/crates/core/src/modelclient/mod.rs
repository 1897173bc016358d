//! Every language or vision model call goes through [`ModelClient`]. Each
//! capability is a typed request/response pair carried as JSON payloads, so
//! the deterministic mock, the record/replay cassette and the remote adapter
//! are interchangeable.

mod cassette;
mod mock;
mod remote;

pub use cassette::{request_key, Cassette, CassetteEntry, CassetteFile, CassetteMode};
pub use mock::MockModel;
pub use remote::{RemoteConfig, RemoteModel};

use crate::decompose::{Decomposition, Draft, Refined};
use crate::doc::from_value_with_path;
use crate::model::{BBox, ChartSpec, Rgb, Role};
use crate::regiondetect::KindGuess;
use crate::workflow::Workflow;
use schemars::JsonSchema;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
pub enum Capability {
    #[serde(rename = "characterize")]
    Characterize,
    #[serde(rename = "label-regions")]
    LabelRegions,
    #[serde(rename = "decompose-stage-1")]
    DecomposeStage1,
    #[serde(rename = "decompose-stage-2")]
    DecomposeStage2,
    #[serde(rename = "decompose-stage-3")]
    DecomposeStage3,
    #[serde(rename = "validate-flow")]
    ValidateFlow,
    #[serde(rename = "phrase-instruction")]
    PhraseInstruction,
}

impl Capability {
    pub fn as_str(self) -> &'static str {
        match self {
            Capability::Characterize => "characterize",
            Capability::LabelRegions => "label-regions",
            Capability::DecomposeStage1 => "decompose-stage-1",
            Capability::DecomposeStage2 => "decompose-stage-2",
            Capability::DecomposeStage3 => "decompose-stage-3",
            Capability::ValidateFlow => "validate-flow",
            Capability::PhraseInstruction => "phrase-instruction",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub capability: Capability,
    pub payload: Value,
    /// PNG bytes, sent base64-encoded on the wire.
    #[serde(rename = "image_base64", default, skip_serializing_if = "Option::is_none", with = "b64_opt")]
    pub image: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub payload: Value,
    pub latency_ms: u64,
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelErrorKind {
    Timeout,
    SchemaViolation { path: String, message: String },
    CassetteMiss { key: String },
    Transport { message: String },
    /// The backend cannot serve this request (e.g. the mock has no ground
    /// truth for an image).
    Unsupported { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize, JsonSchema)]
pub struct ModelError {
    pub capability: Capability,
    #[serde(flatten)]
    pub kind: ModelErrorKind,
}

impl ModelError {
    pub fn code(&self) -> &'static str {
        "MODEL_ERROR"
    }

    pub fn new(capability: Capability, kind: ModelErrorKind) -> Self {
        ModelError { capability, kind }
    }

    pub fn unsupported(capability: Capability, message: impl Into<String>) -> Self {
        ModelError::new(capability, ModelErrorKind::Unsupported { message: message.into() })
    }
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MODEL_ERROR({}) on {}", self.kind.tag(), self.capability.as_str())?;
        match &self.kind {
            ModelErrorKind::Timeout => Ok(()),
            ModelErrorKind::SchemaViolation { path, message } => write!(f, ": at `{path}`: {message}"),
            ModelErrorKind::CassetteMiss { key } => write!(f, ": no recording for {key}"),
            ModelErrorKind::Transport { message } | ModelErrorKind::Unsupported { message } => write!(f, ": {message}"),
        }
    }
}

impl ModelErrorKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ModelErrorKind::Timeout => "timeout",
            ModelErrorKind::SchemaViolation { .. } => "schema-violation",
            ModelErrorKind::CassetteMiss { .. } => "cassette-miss",
            ModelErrorKind::Transport { .. } => "transport",
            ModelErrorKind::Unsupported { .. } => "unsupported",
        }
    }
}

pub trait ModelClient: Send + Sync {
    fn backend_id(&self) -> String;
    fn call(&self, request: &ModelRequest) -> Result<ModelResponse, ModelError>;
}

impl<T: ModelClient + ?Sized> ModelClient for Arc<T> {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }

    fn call(&self, request: &ModelRequest) -> Result<ModelResponse, ModelError> {
        (**self).call(request)
    }
}

/// Backend selector shared by the CLI and the service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Mock,
    Cassette,
    Remote,
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(Backend::Mock),
            "cassette" => Ok(Backend::Cassette),
            "remote" => Ok(Backend::Remote),
            other => Err(format!("unknown backend `{other}` (mock, cassette, remote)")),
        }
    }
}

// ---- typed capability payloads ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RegionCandidate {
    pub id: u32,
    pub bbox: BBox,
    pub kind: KindGuess,
    pub color: Rgb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct LabelRequest {
    /// Pixel digest of the unannotated chart.
    pub source_digest: String,
    pub regions: Vec<RegionCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RegionLabel {
    pub id: u32,
    pub role: Role,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct LabelResponse {
    pub labels: Vec<RegionLabel>,
}

/// Compact view of a labelled region handed to the decomposition prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RegionRef {
    pub id: u32,
    pub role: Role,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DecomposeContext {
    pub question: String,
    pub spec: ChartSpec,
    pub regions: Vec<RegionRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RefineRequest {
    pub context: DecomposeContext,
    pub draft: Draft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct VerifyRequest {
    pub context: DecomposeContext,
    pub refined: Refined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FlowVerdict {
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PhraseRequest {
    pub task_type: String,
    pub instruction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PhraseResponse {
    pub instruction: String,
}

fn typed_call<Req: Serialize, Resp: DeserializeOwned>(
    client: &dyn ModelClient,
    capability: Capability,
    payload: &Req,
    image: Option<Vec<u8>>,
) -> Result<Resp, ModelError> {
    let payload = serde_json::to_value(payload).expect("payloads serialize");
    let response = client.call(&ModelRequest { capability, payload, image })?;
    decode_payload(capability, &response.payload)
}

/// Validates a response payload against the capability's schema.
pub fn decode_payload<Resp: DeserializeOwned>(capability: Capability, payload: &Value) -> Result<Resp, ModelError> {
    from_value_with_path(payload)
        .map_err(|(path, message)| ModelError::new(capability, ModelErrorKind::SchemaViolation { path, message }))
}

pub fn characterize(client: &dyn ModelClient, png: &[u8]) -> Result<ChartSpec, ModelError> {
    typed_call(client, Capability::Characterize, &serde_json::json!({}), Some(png.to_vec()))
}

pub fn label_regions(client: &dyn ModelClient, annotated_png: &[u8], request: &LabelRequest) -> Result<LabelResponse, ModelError> {
    typed_call(client, Capability::LabelRegions, request, Some(annotated_png.to_vec()))
}

pub fn breakdown(client: &dyn ModelClient, ctx: &DecomposeContext) -> Result<Draft, ModelError> {
    typed_call(client, Capability::DecomposeStage1, ctx, None)
}

pub fn refine(client: &dyn ModelClient, req: &RefineRequest) -> Result<Refined, ModelError> {
    typed_call(client, Capability::DecomposeStage2, req, None)
}

pub fn verify(client: &dyn ModelClient, req: &VerifyRequest) -> Result<Decomposition, ModelError> {
    typed_call(client, Capability::DecomposeStage3, req, None)
}

pub fn validate_flow(client: &dyn ModelClient, wf: &Workflow) -> Result<FlowVerdict, ModelError> {
    typed_call(client, Capability::ValidateFlow, wf, None)
}

pub fn phrase_instruction(client: &dyn ModelClient, req: &PhraseRequest) -> Result<PhraseResponse, ModelError> {
    typed_call(client, Capability::PhraseInstruction, req, None)
}

mod b64_opt {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(bytes) => s.serialize_str(&STANDARD.encode(bytes)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        let s: Option<String> = Option::deserialize(d)?;
        s.map(|s| STANDARD.decode(s).map_err(serde::de::Error::custom)).transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_wire_format() {
        let req = ModelRequest { capability: Capability::Characterize, payload: serde_json::json!({}), image: Some(vec![1, 2, 3]) };
        let v = serde_json::to_value(&req).unwrap();
        assert_eq!(v["capability"], "characterize");
        assert_eq!(v["image_base64"], "AQID");
        let back: ModelRequest = serde_json::from_value(v).unwrap();
        assert_eq!(back, req);
    }

    #[test]
    fn schema_violation_carries_path() {
        let bad = serde_json::json!({"labels": [{"id": 1, "role": "data-mark"}]});
        let err = decode_payload::<LabelResponse>(Capability::LabelRegions, &bad).unwrap_err();
        match err.kind {
            ModelErrorKind::SchemaViolation { path, .. } => assert_eq!(path, "labels[0]"),
            other => panic!("{other:?}"),
        }
    }
}
