use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

const JOURNAL: &str = "journal.jsonl";

/// One line of a session journal: a file was (re)written with this content hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JournalEntry {
    pub seq: u64,
    pub at: u64,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("STORE_CORRUPT: session {session}, {file}: {reason}")]
    Corrupt { session: String, file: String, reason: String },
    #[error("STORE_IO: {0}")]
    Io(String),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::Corrupt { .. } => "STORE_CORRUPT",
            StoreError::Io(_) => "STORE_IO",
        }
    }
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::Io(e.to_string())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// File-backed session store: one directory per session holding its files
/// and an append-only journal of content hashes.
#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

fn valid_file(name: &str) -> bool {
    !name.is_empty() && name != JOURNAL && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) && !name.starts_with('.')
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn exists(&self, id: &str) -> bool {
        valid_id(id) && self.dir(id).join(JOURNAL).is_file()
    }

    /// Session ids with a journal, sorted.
    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::new();
        for e in fs::read_dir(&self.root)? {
            let name = e?.file_name().to_string_lossy().into_owned();
            if self.exists(&name) {
                ids.push(name);
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn journal(&self, id: &str) -> Result<Vec<JournalEntry>, StoreError> {
        let path = self.dir(id).join(JOURNAL);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str(l).map_err(|e| StoreError::Corrupt { session: id.into(), file: JOURNAL.into(), reason: e.to_string() })
            })
            .collect()
    }

    fn latest(&self, id: &str) -> Result<BTreeMap<String, JournalEntry>, StoreError> {
        Ok(self.journal(id)?.into_iter().map(|e| (e.file.clone(), e)).collect())
    }

    /// Writes `file` atomically and journals its hash. Unchanged content is
    /// not rewritten.
    pub fn put(&self, id: &str, file: &str, bytes: &[u8], at: u64) -> Result<(), StoreError> {
        assert!(valid_id(id) && valid_file(file), "invalid store path {id}/{file}");
        let dir = self.dir(id);
        fs::create_dir_all(&dir)?;
        let latest = self.latest(id)?;
        let sha256 = sha256_hex(bytes);
        if latest.get(file).is_some_and(|e| e.sha256 == sha256) && dir.join(file).is_file() {
            return Ok(());
        }
        let tmp = dir.join(format!(".{file}.tmp"));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, dir.join(file))?;
        let seq = self.journal(id)?.last().map_or(1, |e| e.seq + 1);
        let entry = JournalEntry { seq, at, file: file.into(), sha256 };
        let mut line = serde_json::to_string(&entry).expect("journal entries serialize");
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(dir.join(JOURNAL))?;
        f.write_all(line.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }

    /// Reads `file`, checking it against its last journalled hash.
    pub fn get(&self, id: &str, file: &str) -> Result<Option<Vec<u8>>, StoreError> {
        if !valid_id(id) || !valid_file(file) {
            return Ok(None);
        }
        let latest = self.latest(id)?;
        let path = self.dir(id).join(file);
        let corrupt = |reason: &str| StoreError::Corrupt { session: id.into(), file: file.into(), reason: reason.into() };
        match (latest.get(file), path.is_file()) {
            (None, false) => Ok(None),
            (None, true) => Err(corrupt("file is not in the journal")),
            (Some(_), false) => Err(corrupt("journalled file is missing")),
            (Some(e), true) => {
                let bytes = fs::read(&path)?;
                if sha256_hex(&bytes) == e.sha256 {
                    Ok(Some(bytes))
                } else {
                    Err(corrupt("checksum mismatch"))
                }
            }
        }
    }

    pub fn remove(&self, id: &str) -> Result<(), StoreError> {
        if valid_id(id) && self.dir(id).is_dir() {
            fs::remove_dir_all(self.dir(id))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_tamper() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(store.list().unwrap().is_empty());
        store.put("s1", "a.json", b"{}", 1).unwrap();
        store.put("s1", "a.json", b"{}", 2).unwrap();
        assert_eq!(store.journal("s1").unwrap().len(), 1);
        assert_eq!(store.get("s1", "a.json").unwrap().unwrap(), b"{}");
        assert_eq!(store.get("s1", "b.json").unwrap(), None);
        assert_eq!(store.list().unwrap(), vec!["s1".to_owned()]);
        fs::write(dir.path().join("s1/a.json"), b"{\"x\":1}").unwrap();
        assert_eq!(store.get("s1", "a.json").unwrap_err().code(), "STORE_CORRUPT");
    }

    #[test]
    fn rejects_path_tricks() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.get("..", "a.json").unwrap(), None);
        assert_eq!(store.get("s1", "../x").unwrap(), None);
        assert!(!store.exists("../etc"));
    }
}
