//! JSON Schemas for every versioned document, generated from the Rust types.

use crate::decompose::{Decomposition, Draft};
use crate::doc::Document;
use crate::eval::EvalReport;
use crate::guidance::GuidanceStep;
use crate::model::ChartSpec;
use crate::modelclient::CassetteFile;
use crate::regiondetect::Detection;
use crate::semantics::SemanticRegions;
use crate::service::SessionMeta;
use crate::synth::{DataSpec, GroundTruth, TaskBank};
use crate::workflow::{Edit, Workflow};
use schemars::JsonSchema;
use std::path::Path;

fn one<T: Document + JsonSchema>() -> (&'static str, String) {
    let schema = schemars::schema_for!(T);
    let mut text = serde_json::to_string_pretty(&schema).expect("schemas serialize");
    text.push('\n');
    (T::SCHEMA, text)
}

/// `(schema name, pretty JSON Schema)` for each document, sorted by name.
pub fn all() -> Vec<(&'static str, String)> {
    let mut v = vec![
        one::<ChartSpec>(),
        one::<Detection>(),
        one::<SemanticRegions>(),
        one::<Draft>(),
        one::<Decomposition>(),
        one::<Workflow>(),
        one::<Edit>(),
        one::<GuidanceStep>(),
        one::<EvalReport>(),
        one::<CassetteFile>(),
        one::<GroundTruth>(),
        one::<TaskBank>(),
        one::<DataSpec>(),
        one::<SessionMeta>(),
    ];
    v.sort_by_key(|(name, _)| *name);
    v
}

/// Writes `<name>.json` for each schema into `dir`.
pub fn write_all(dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, text) in all() {
        std::fs::write(dir.join(format!("{name}.json")), text)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn names_are_unique_and_versioned() {
        let names: BTreeSet<&str> = all().iter().map(|(n, _)| *n).collect();
        assert_eq!(names.len(), all().len());
        assert!(names.iter().all(|n| n.ends_with(".v1")));
    }

    #[test]
    fn committed_schemas_are_fresh() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas");
        if std::env::var_os("CHARTGUIDE_BLESS").is_some() {
            write_all(&dir).unwrap();
        }
        for (name, text) in all() {
            let path = dir.join(format!("{name}.json"));
            let committed = std::fs::read_to_string(&path).unwrap_or_default();
            assert!(committed == text, "{} is stale; rerun with CHARTGUIDE_BLESS=1", path.display());
        }
    }
}
