//! Versioned JSON interchange documents.
//!
//! Every document carries a top-level `"schema_version": 1`, rejects unknown
//! fields and serializes canonically (fixed field order, sorted maps, pretty
//! printed with a trailing newline), so `serialize(parse(d))` is
//! byte-identical for documents that were produced by [`Document::to_json`].

use schemars::gen::SchemaGenerator;
use schemars::schema::{InstanceType, Schema, SchemaObject};
use schemars::JsonSchema;
use serde::de::{self, DeserializeOwned, Deserializer};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

/// The only schema version this crate reads or writes.
pub const CURRENT_SCHEMA_VERSION: u32 = 1;

/// Zero-sized marker that serializes as `1` and refuses any other value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SchemaVersion;

impl Serialize for SchemaVersion {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u32(CURRENT_SCHEMA_VERSION)
    }
}

impl<'de> Deserialize<'de> for SchemaVersion {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = u64::deserialize(deserializer)?;
        if v == u64::from(CURRENT_SCHEMA_VERSION) {
            Ok(SchemaVersion)
        } else {
            Err(de::Error::custom(format!(
                "unsupported schema_version {v}, expected {CURRENT_SCHEMA_VERSION}"
            )))
        }
    }
}

impl JsonSchema for SchemaVersion {
    fn schema_name() -> String {
        "SchemaVersion".to_owned()
    }

    fn json_schema(_: &mut SchemaGenerator) -> Schema {
        SchemaObject {
            instance_type: Some(InstanceType::Integer.into()),
            const_value: Some(CURRENT_SCHEMA_VERSION.into()),
            ..Default::default()
        }
        .into()
    }
}

/// Malformed or non-conforming document.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("PARSE_ERROR in {schema} at line {line}, column {column} (path `{path}`): {message}")]
pub struct ParseError {
    pub schema: &'static str,
    pub line: usize,
    pub column: usize,
    pub path: String,
    pub message: String,
}

impl ParseError {
    pub fn code(&self) -> &'static str {
        "PARSE_ERROR"
    }
}

/// A top-level interchange document.
pub trait Document: Serialize + DeserializeOwned {
    /// Schema identifier, e.g. `chartspec.v1`.
    const SCHEMA: &'static str;

    fn to_json(&self) -> String {
        to_canonical_json(self)
    }

    fn from_json(text: &str) -> Result<Self, ParseError> {
        parse_strict(Self::SCHEMA, text)
    }
}

/// Pretty JSON with a trailing newline. Struct fields keep declaration order
/// and `serde_json::Value` maps are sorted, which makes the output canonical.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents always serialize");
    s.push('\n');
    s
}

/// Deserialize with line/column and a field path on failure.
pub fn parse_strict<T: DeserializeOwned>(schema: &'static str, text: &str) -> Result<T, ParseError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ParseError {
            schema,
            line: inner.line(),
            column: inner.column(),
            path,
            message: inner.to_string(),
        }
    })?;
    de.end().map_err(|e| ParseError {
        schema,
        line: e.line(),
        column: e.column(),
        path: ".".to_owned(),
        message: e.to_string(),
    })?;
    Ok(value)
}

/// Deserialize a typed value out of an already parsed JSON tree, reporting the
/// offending path.
pub fn from_value_with_path<T: DeserializeOwned>(value: &serde_json::Value) -> Result<T, (String, String)> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        (path, e.into_inner().to_string())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields)]
    struct Probe {
        schema_version: SchemaVersion,
        name: String,
    }

    impl Document for Probe {
        const SCHEMA: &'static str = "probe.v1";
    }

    #[test]
    fn version_other_than_one_is_rejected() {
        let err = Probe::from_json(r#"{"schema_version": 2, "name": "x"}"#).unwrap_err();
        assert!(err.message.contains("unsupported schema_version 2"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = Probe::from_json("{\n  \"schema_version\": 1,\n  \"name\": }").unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.column > 0);
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        assert!(Probe::from_json(r#"{"schema_version": 1, "name": "x"} {}"#).is_err());
    }

    #[test]
    fn canonical_round_trip() {
        let p = Probe { schema_version: SchemaVersion, name: "a".into() };
        let text = p.to_json();
        assert_eq!(Probe::from_json(&text).unwrap().to_json(), text);
        assert!(text.ends_with("}\n"));
    }
}
