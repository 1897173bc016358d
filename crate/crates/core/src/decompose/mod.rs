//! Question decomposition into typed low-level subtasks.
//!
//! A question passes through three stages, each a typed document exchanged
//! with a [`ModelClient`]: a breakdown into [`Draft`] steps, a refinement into
//! grounded [`Subtask`]s, and verification into a [`Decomposition`]. The
//! rule engine in this module implements all three stages deterministically
//! and backs the mock model.

mod execute;
mod rules;
mod verify;

pub use execute::{execute, DataTable, Datum, ExecError, ExecTrace, Row, StepOutput};
pub use rules::{breakdown, phrase, refine, MarkRef, Vocabulary};
pub(crate) use rules::split_list;
pub use verify::{check_decomposition, verify};

use crate::doc::{Document, SchemaVersion};
use crate::model::ChartSpec;
use crate::modelclient::{self, DecomposeContext, ModelClient, ModelError, RefineRequest, RegionRef, VerifyRequest};
use crate::semantics::SemanticRegion;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// The ten low-level analytic task types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum TaskType {
    RetrieveValue,
    Filter,
    ComputeDerivedValue,
    FindExtremum,
    Sort,
    DetermineRange,
    CharacterizeDistribution,
    FindAnomalies,
    Cluster,
    Correlate,
}

impl TaskType {
    pub const ALL: [TaskType; 10] = [
        TaskType::RetrieveValue,
        TaskType::Filter,
        TaskType::ComputeDerivedValue,
        TaskType::FindExtremum,
        TaskType::Sort,
        TaskType::DetermineRange,
        TaskType::CharacterizeDistribution,
        TaskType::FindAnomalies,
        TaskType::Cluster,
        TaskType::Correlate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::RetrieveValue => "retrieve-value",
            TaskType::Filter => "filter",
            TaskType::ComputeDerivedValue => "compute-derived-value",
            TaskType::FindExtremum => "find-extremum",
            TaskType::Sort => "sort",
            TaskType::DetermineRange => "determine-range",
            TaskType::CharacterizeDistribution => "characterize-distribution",
            TaskType::FindAnomalies => "find-anomalies",
            TaskType::Cluster => "cluster",
            TaskType::Correlate => "correlate",
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub type Params = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Subtask {
    pub id: u32,
    pub task_type: TaskType,
    pub instruction: String,
    pub target_region_ids: Vec<u32>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub deps: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub enum Provenance {
    #[serde(rename = "rule-based")]
    RuleBased,
    #[serde(rename = "model")]
    Model,
    #[serde(rename = "model+edited")]
    ModelEdited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Decomposition {
    pub schema_version: SchemaVersion,
    pub question: String,
    pub subtasks: Vec<Subtask>,
    pub provenance: Provenance,
}

impl Document for Decomposition {
    const SCHEMA: &'static str = "decomposition.v1";
}

impl Decomposition {
    pub fn subtask(&self, id: u32) -> Option<&Subtask> {
        self.subtasks.iter().find(|s| s.id == id)
    }
}

/// One breakdown step. `consumes` lists indices of earlier steps whose
/// output this step reads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DraftStep {
    /// Untyped steps are rejected after the breakdown stage.
    pub task_type: Option<TaskType>,
    pub instruction: String,
    #[serde(default)]
    pub targets: Vec<u32>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub consumes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Draft {
    pub schema_version: SchemaVersion,
    pub question: String,
    pub steps: Vec<DraftStep>,
    /// Set when the backend declines the question.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection: Option<DecompError>,
}

impl Document for Draft {
    const SCHEMA: &'static str = "draft.v1";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Refined {
    pub schema_version: SchemaVersion,
    pub question: String,
    pub subtasks: Vec<Subtask>,
}

/// A single broken invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Violation {
    EmptyQuestion,
    NoSubtasks,
    UnknownTarget { name: String },
    UntypedStep { step: usize },
    EmptyInstruction { subtask: u32 },
    DuplicateId { subtask: u32 },
    DuplicateSubtask { subtask: u32 },
    MissingDep { subtask: u32, dep: u32 },
    UnknownRegion { subtask: u32, region: u32 },
    Cycle,
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::EmptyQuestion => "EMPTY_QUESTION",
            Violation::NoSubtasks => "NO_SUBTASKS",
            Violation::UnknownTarget { .. } => "UNKNOWN_TARGET",
            Violation::UntypedStep { .. } => "UNTYPED_STEP",
            Violation::EmptyInstruction { .. } => "EMPTY_INSTRUCTION",
            Violation::DuplicateId { .. } => "DUPLICATE_ID",
            Violation::DuplicateSubtask { .. } => "DUPLICATE_SUBTASK",
            Violation::MissingDep { .. } => "MISSING_DEP",
            Violation::UnknownRegion { .. } => "UNKNOWN_REGION",
            Violation::Cycle => "CYCLE",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())?;
        match self {
            Violation::UnknownTarget { name } => write!(f, " `{name}`"),
            Violation::UntypedStep { step } => write!(f, " at step {step}"),
            Violation::EmptyInstruction { subtask } | Violation::DuplicateId { subtask } | Violation::DuplicateSubtask { subtask } => write!(f, " at subtask {subtask}"),
            Violation::MissingDep { subtask, dep } => write!(f, " {dep} of subtask {subtask}"),
            Violation::UnknownRegion { subtask, region } => write!(f, " {region} in subtask {subtask}"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "code", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DecompError {
    #[error("DECOMP_INVALID({})", join(reasons))]
    DecompInvalid { reasons: Vec<Violation> },
    #[error("TEMPLATE_UNMATCHED: no bundled template fits `{question}`")]
    TemplateUnmatched { question: String },
    #[error("REFINE_UNGROUNDABLE: step {step}: {reason}")]
    RefineUngroundable { step: usize, reason: String },
    #[error("{error}")]
    ModelError { error: ModelError },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl DecompError {
    pub fn code(&self) -> &'static str {
        match self {
            DecompError::DecompInvalid { .. } => "DECOMP_INVALID",
            DecompError::TemplateUnmatched { .. } => "TEMPLATE_UNMATCHED",
            DecompError::RefineUngroundable { .. } => "REFINE_UNGROUNDABLE",
            DecompError::ModelError { .. } => "MODEL_ERROR",
        }
    }

    pub fn invalid(v: Violation) -> Self {
        DecompError::DecompInvalid { reasons: vec![v] }
    }

    pub fn has(&self, code: &str) -> bool {
        matches!(self, DecompError::DecompInvalid { reasons } if reasons.iter().any(|r| r.code() == code))
    }
}

impl From<ModelError> for DecompError {
    fn from(error: ModelError) -> Self {
        DecompError::ModelError { error }
    }
}

/// A question's answer: a number, a label, or an ordered list of labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum Answer {
    Number(f64),
    Label(String),
    List(Vec<String>),
}

/// Absolute tolerance for numeric answers.
pub const ANSWER_TOLERANCE: f64 = 0.01;

impl Answer {
    pub fn matches(&self, expected: &Answer) -> bool {
        match (self, expected) {
            (Answer::Number(a), Answer::Number(b)) => (a - b).abs() <= ANSWER_TOLERANCE,
            (Answer::Label(a), Answer::Label(b)) => a.eq_ignore_ascii_case(b),
            (Answer::List(a), Answer::List(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.eq_ignore_ascii_case(y)),
            _ => false,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Number(n) => write!(f, "{n}"),
            Answer::Label(s) => f.write_str(s),
            Answer::List(v) => f.write_str(&v.join(", ")),
        }
    }
}

pub fn region_refs(regions: &[SemanticRegion]) -> Vec<RegionRef> {
    regions
        .iter()
        .map(|r| RegionRef { id: r.id, role: r.role, label: r.label.clone(), series: r.series.clone(), category: r.category.clone() })
        .collect()
}

/// Three-stage decomposition through `model`. Each stage's output is checked
/// locally before the next stage runs.
pub fn decompose(question: &str, spec: &ChartSpec, regions: &[SemanticRegion], model: &dyn ModelClient) -> Result<Decomposition, DecompError> {
    let question = question.trim();
    if question.is_empty() {
        return Err(DecompError::invalid(Violation::EmptyQuestion));
    }
    let context = DecomposeContext { question: question.to_owned(), spec: spec.clone(), regions: region_refs(regions) };
    let draft = modelclient::breakdown(model, &context)?;
    check_draft(&draft)?;
    let refined = modelclient::refine(model, &RefineRequest { context: context.clone(), draft })?;
    check_grounding(&refined.subtasks, &context.regions)?;
    let dec = modelclient::verify(model, &VerifyRequest { context: context.clone(), refined })?;
    let violations = check_decomposition(&dec, &context.regions);
    if violations.is_empty() {
        Ok(dec)
    } else {
        Err(DecompError::DecompInvalid { reasons: violations })
    }
}

/// Deterministic three-stage decomposition without a model.
pub fn rule_decompose(question: &str, spec: &ChartSpec, regions: &[RegionRef]) -> Result<Decomposition, DecompError> {
    let vocab = Vocabulary::new(spec, regions);
    let draft = breakdown(question, &vocab);
    check_draft(&draft)?;
    let refined = refine(&draft, &vocab)?;
    let subtasks = verify(&refined.subtasks)?;
    Ok(Decomposition { schema_version: SchemaVersion, question: draft.question, subtasks, provenance: Provenance::RuleBased })
}

/// Post-breakdown checks: declined questions, empty drafts, untyped steps.
pub fn check_draft(draft: &Draft) -> Result<(), DecompError> {
    if let Some(e) = &draft.rejection {
        return Err(e.clone());
    }
    if draft.steps.is_empty() {
        return Err(DecompError::invalid(Violation::NoSubtasks));
    }
    let untyped: Vec<Violation> = draft
        .steps
        .iter()
        .enumerate()
        .filter(|(_, s)| s.task_type.is_none())
        .map(|(step, _)| Violation::UntypedStep { step })
        .collect();
    if untyped.is_empty() {
        Ok(())
    } else {
        Err(DecompError::DecompInvalid { reasons: untyped })
    }
}

/// Every refined step names an existing region or a concrete axis.
pub fn check_grounding(subtasks: &[Subtask], regions: &[RegionRef]) -> Result<(), DecompError> {
    for (step, s) in subtasks.iter().enumerate() {
        if let Some(missing) = s.target_region_ids.iter().find(|id| !regions.iter().any(|r| r.id == **id)) {
            return Err(DecompError::RefineUngroundable { step, reason: format!("region {missing} does not exist") });
        }
        if s.target_region_ids.is_empty() && !s.params.contains_key("axis") {
            return Err(DecompError::RefineUngroundable { step, reason: "no target region or axis".into() });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taxonomy_has_ten_types() {
        assert_eq!(TaskType::ALL.len(), 10);
        for t in TaskType::ALL {
            assert_eq!(serde_json::to_value(t).unwrap(), t.as_str());
        }
    }

    #[test]
    fn answers_compare_with_tolerance() {
        assert!(Answer::Number(26.374).matches(&Answer::Number(26.37)));
        assert!(!Answer::Number(26.4).matches(&Answer::Number(26.37)));
        assert!(Answer::Label("gbr".into()).matches(&Answer::Label("GBR".into())));
        assert!(!Answer::Label("20".into()).matches(&Answer::Number(20.0)));
    }

    #[test]
    fn error_codes_render() {
        let e = DecompError::invalid(Violation::UnknownTarget { name: "PLATINUM".into() });
        assert_eq!(e.to_string(), "DECOMP_INVALID(UNKNOWN_TARGET `PLATINUM`)");
        assert!(e.has("UNKNOWN_TARGET"));
        let json = serde_json::to_value(&e).unwrap();
        assert_eq!(json["code"], "DECOMP_INVALID");
        assert_eq!(serde_json::from_value::<DecompError>(json).unwrap(), e);
    }
}
