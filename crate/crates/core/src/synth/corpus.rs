use super::{render, DataSpec, GroundTruth, SynthError};
use crate::decompose::Answer;
use crate::doc::{Document, SchemaVersion};
use crate::raster::Image;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// The bundled question bank: 45 questions over 14 charts.
pub const TASKBANK_JSON: &str = include_str!("../../data/taskbank.v1.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TaskFixture {
    pub id: String,
    pub chart_id: String,
    pub question: String,
    pub answer: Answer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TaskBank {
    pub schema_version: SchemaVersion,
    pub charts: Vec<DataSpec>,
    pub tasks: Vec<TaskFixture>,
}

impl Document for TaskBank {
    const SCHEMA: &'static str = "taskbank.v1";
}

impl TaskBank {
    pub fn bundled() -> TaskBank {
        TaskBank::from_json(TASKBANK_JSON).expect("bundled task bank is valid")
    }

    pub fn chart(&self, chart_id: &str) -> Option<&DataSpec> {
        self.charts.iter().find(|c| c.chart_id == chart_id)
    }
}

/// One rendered chart with the questions asked about it.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub data: DataSpec,
    pub image: Image,
    pub truth: GroundTruth,
    pub tasks: Vec<TaskFixture>,
}

/// Per-chart seed derived from the corpus seed and the chart id.
pub fn chart_seed(seed: u64, chart_id: &str) -> u64 {
    let digest = Sha256::digest(format!("{seed}:{chart_id}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Renders every chart of `bank` with seeds derived from `seed`.
pub fn corpus_from_bank(bank: &TaskBank, seed: u64) -> Result<Vec<CorpusEntry>, SynthError> {
    bank.charts
        .iter()
        .map(|c| {
            let mut data = c.clone();
            data.rng_seed = chart_seed(seed, &c.chart_id);
            let (image, truth) = render(&data)?;
            let tasks = bank.tasks.iter().filter(|t| t.chart_id == c.chart_id).cloned().collect();
            Ok(CorpusEntry { data, image, truth, tasks })
        })
        .collect()
}

/// The bundled corpus: all twelve chart types and the 45 question fixtures.
pub fn generate_corpus(seed: u64) -> Result<Vec<CorpusEntry>, SynthError> {
    corpus_from_bank(&TaskBank::bundled(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChartType;
    use std::collections::BTreeSet;

    #[test]
    fn bank_shape() {
        let bank = TaskBank::bundled();
        assert_eq!(bank.tasks.len(), 45);
        let types: BTreeSet<ChartType> = bank.charts.iter().map(|c| c.chart_type).collect();
        assert_eq!(types.len(), 12);
        assert!(bank.tasks.iter().all(|t| bank.chart(&t.chart_id).is_some()));
    }

    #[test]
    fn seeds_differ_per_chart() {
        assert_ne!(chart_seed(42, "bar_basic"), chart_seed(42, "olympic"));
        assert_eq!(chart_seed(42, "bar_basic"), chart_seed(42, "bar_basic"));
    }
}
