use super::{Capability, ModelClient, ModelError, ModelErrorKind, ModelRequest, ModelResponse};
use crate::doc::{Document, SchemaVersion};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

/// SHA-256 over the canonical JSON of the request, image included.
pub fn request_key(req: &ModelRequest) -> String {
    let canonical = serde_json::to_vec(&serde_json::to_value(req).expect("requests serialize")).expect("values serialize");
    hex::encode(Sha256::digest(&canonical))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CassetteEntry {
    pub key: String,
    pub capability: Capability,
    /// The request payload, kept for reading; the image is represented by the key only.
    pub request: Value,
    pub response: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CassetteFile {
    pub schema_version: SchemaVersion,
    pub entries: Vec<CassetteEntry>,
}

impl Document for CassetteFile {
    const SCHEMA: &'static str = "cassette.v1";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CassetteMode {
    /// Serve recorded responses; a miss is an error.
    Replay,
    /// Forward misses to the inner client and append them to the file.
    Record,
}

pub struct Cassette {
    path: PathBuf,
    mode: CassetteMode,
    inner: Option<Box<dyn ModelClient>>,
    entries: Mutex<BTreeMap<String, CassetteEntry>>,
}

impl std::fmt::Debug for Cassette {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cassette").field("path", &self.path).field("mode", &self.mode).finish()
    }
}

fn load(path: &Path) -> std::io::Result<BTreeMap<String, CassetteEntry>> {
    let text = std::fs::read_to_string(path)?;
    let file = CassetteFile::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
    Ok(file.entries.into_iter().map(|e| (e.key.clone(), e)).collect())
}

impl Cassette {
    pub fn replay(path: impl Into<PathBuf>) -> std::io::Result<Self> {
        let path = path.into();
        let entries = load(&path)?;
        Ok(Cassette { path, mode: CassetteMode::Replay, inner: None, entries: Mutex::new(entries) })
    }

    /// Records through `inner`, keeping anything already in the file.
    pub fn record(path: impl Into<PathBuf>, inner: Box<dyn ModelClient>) -> std::io::Result<Self> {
        let path = path.into();
        let entries = if path.exists() { load(&path)? } else { BTreeMap::new() };
        Ok(Cassette { path, mode: CassetteMode::Record, inner: Some(inner), entries: Mutex::new(entries) })
    }

    pub fn mode(&self) -> CassetteMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cassette lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn save(&self, entries: &BTreeMap<String, CassetteEntry>) -> std::io::Result<()> {
        let file = CassetteFile { schema_version: SchemaVersion, entries: entries.values().cloned().collect() };
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&self.path, file.to_json())
    }
}

impl ModelClient for Cassette {
    fn backend_id(&self) -> String {
        format!("cassette:{}", self.path.display())
    }

    fn call(&self, req: &ModelRequest) -> Result<ModelResponse, ModelError> {
        let key = request_key(req);
        if let Some(e) = self.entries.lock().expect("cassette lock").get(&key) {
            return Ok(ModelResponse { payload: e.response.clone(), latency_ms: 0, backend: self.backend_id() });
        }
        let inner = match (&self.inner, self.mode) {
            (Some(inner), CassetteMode::Record) => inner,
            _ => return Err(ModelError::new(req.capability, ModelErrorKind::CassetteMiss { key })),
        };
        let response = inner.call(req)?;
        let mut entries = self.entries.lock().expect("cassette lock");
        entries.insert(
            key.clone(),
            CassetteEntry { key, capability: req.capability, request: req.payload.clone(), response: response.payload.clone() },
        );
        self.save(&entries)
            .map_err(|e| ModelError::new(req.capability, ModelErrorKind::Transport { message: format!("writing cassette: {e}") }))?;
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;
    impl ModelClient for Echo {
        fn backend_id(&self) -> String {
            "echo".into()
        }
        fn call(&self, req: &ModelRequest) -> Result<ModelResponse, ModelError> {
            Ok(ModelResponse { payload: req.payload.clone(), latency_ms: 1, backend: "echo".into() })
        }
    }

    fn req(n: i64) -> ModelRequest {
        ModelRequest { capability: Capability::PhraseInstruction, payload: serde_json::json!({ "n": n }), image: None }
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let rec = Cassette::record(&path, Box::new(Echo)).unwrap();
        assert_eq!(rec.call(&req(1)).unwrap().payload["n"], 1);
        let replay = Cassette::replay(&path).unwrap();
        assert_eq!(replay.len(), 1);
        assert_eq!(replay.call(&req(1)).unwrap().payload["n"], 1);
        let miss = replay.call(&req(2)).unwrap_err();
        assert!(matches!(miss.kind, ModelErrorKind::CassetteMiss { .. }));
    }

    #[test]
    fn key_depends_on_image() {
        let mut a = req(1);
        let k1 = request_key(&a);
        a.image = Some(vec![1]);
        assert_ne!(k1, request_key(&a));
        assert_eq!(k1.len(), 64);
    }
}
