//! Editable decomposition flow: a DAG of subtasks with an execution order,
//! per-node progress and a version that increments on every accepted edit.

use crate::decompose::{phrase, split_list, Decomposition, Provenance, Subtask, Vocabulary};
use crate::doc::{Document, SchemaVersion};
use crate::modelclient::{self, FlowVerdict, ModelClient};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum NodeStatus {
    Pending,
    Active,
    Done,
}

/// `consumer` reads the output of `producer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub producer: u32,
    pub consumer: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Workflow {
    pub schema_version: SchemaVersion,
    pub version: u64,
    pub question: String,
    pub provenance: Provenance,
    pub nodes: Vec<Subtask>,
    pub edges: Vec<Edge>,
    pub order: Vec<u32>,
    pub status: BTreeMap<u32, NodeStatus>,
    /// Names and marks parameters may be set to.
    pub vocabulary: Vocabulary,
}

impl Document for Workflow {
    const SCHEMA: &'static str = "workflow.v1";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EditKind {
    /// Replaces the execution order.
    Reorder { order: Vec<u32> },
    /// Sets (or with `value: null` removes) one parameter.
    SetParam { node: u32, key: String, value: Option<String> },
    RemoveStep { node: u32 },
    /// Points a step at one named category or series.
    SelectInstance { node: u32, instance: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Edit {
    pub schema_version: SchemaVersion,
    /// Version the edit was made against; a mismatch is a stale write.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_version: Option<u64>,
    pub edit: EditKind,
}

impl Document for Edit {
    const SCHEMA: &'static str = "edit.v1";
}

impl Edit {
    pub fn new(base_version: Option<u64>, edit: EditKind) -> Self {
        Edit { schema_version: SchemaVersion, base_version, edit }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    Cycle,
    DepOrderViolation,
    UnknownNode,
    UngroundedParam,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::Cycle => "CYCLE",
            RejectReason::DepOrderViolation => "DEP_ORDER_VIOLATION",
            RejectReason::UnknownNode => "UNKNOWN_NODE",
            RejectReason::UngroundedParam => "UNGROUNDED_PARAM",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "code", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WorkflowError {
    #[error("EDIT_REJECTED({}): {message}", reason.code())]
    EditRejected { reason: RejectReason, message: String },
    #[error("STALE_VERSION: edit made against version {base}, workflow is at {current}")]
    StaleVersion { base: u64, current: u64 },
    #[error("WORKFLOW_COMPLETE")]
    WorkflowComplete,
}

impl WorkflowError {
    pub fn code(&self) -> &'static str {
        match self {
            WorkflowError::EditRejected { .. } => "EDIT_REJECTED",
            WorkflowError::StaleVersion { .. } => "STALE_VERSION",
            WorkflowError::WorkflowComplete => "WORKFLOW_COMPLETE",
        }
    }

    pub fn reason(&self) -> Option<RejectReason> {
        match self {
            WorkflowError::EditRejected { reason, .. } => Some(*reason),
            _ => None,
        }
    }
}

fn reject(reason: RejectReason, message: impl Into<String>) -> WorkflowError {
    WorkflowError::EditRejected { reason, message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FlowIssue {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FlowReport {
    pub issues: Vec<FlowIssue>,
    /// Model opinion on logical consistency; never affects `issues`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advisory: Option<FlowVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advisory_error: Option<String>,
}

impl FlowReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has(&self, code: &str) -> bool {
        self.issues.iter().any(|i| i.code == code)
    }
}

const SERIES_KEYS: [&str; 2] = ["series", "category"];

/// True when `order` lists every node once and each consumer after its producers.
pub fn is_topological(order: &[u32], nodes: &BTreeSet<u32>, edges: &[Edge]) -> bool {
    let pos: BTreeMap<u32, usize> = order.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    pos.len() == order.len()
        && pos.keys().copied().collect::<BTreeSet<_>>() == *nodes
        && edges.iter().all(|e| matches!((pos.get(&e.producer), pos.get(&e.consumer)), (Some(a), Some(b)) if a < b))
}

fn has_cycle(nodes: &BTreeSet<u32>, edges: &[Edge]) -> bool {
    let mut indeg: BTreeMap<u32, usize> = nodes.iter().map(|n| (*n, 0)).collect();
    for e in edges {
        if let Some(d) = indeg.get_mut(&e.consumer) {
            *d += 1;
        }
    }
    let mut ready: Vec<u32> = indeg.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
    let mut seen = 0;
    while let Some(n) = ready.pop() {
        seen += 1;
        for e in edges.iter().filter(|e| e.producer == n) {
            if let Some(d) = indeg.get_mut(&e.consumer) {
                *d -= 1;
                if *d == 0 {
                    ready.push(e.consumer);
                }
            }
        }
    }
    seen < nodes.len()
}

impl Workflow {
    /// All nodes pending, order as decomposed, version 1.
    pub fn build(dec: &Decomposition, vocabulary: Vocabulary) -> Workflow {
        let edges = dec
            .subtasks
            .iter()
            .flat_map(|s| s.deps.iter().map(move |d| Edge { producer: *d, consumer: s.id }))
            .collect();
        Workflow {
            schema_version: SchemaVersion,
            version: 1,
            question: dec.question.clone(),
            provenance: dec.provenance,
            nodes: dec.subtasks.clone(),
            edges,
            order: dec.subtasks.iter().map(|s| s.id).collect(),
            status: dec.subtasks.iter().map(|s| (s.id, NodeStatus::Pending)).collect(),
            vocabulary,
        }
    }

    pub fn node(&self, id: u32) -> Option<&Subtask> {
        self.nodes.iter().find(|n| n.id == id)
    }

    fn node_ids(&self) -> BTreeSet<u32> {
        self.nodes.iter().map(|n| n.id).collect()
    }

    pub fn active(&self) -> Option<u32> {
        self.order.iter().copied().find(|id| self.status.get(id) == Some(&NodeStatus::Active))
    }

    pub fn is_complete(&self) -> bool {
        self.status.values().all(|s| *s == NodeStatus::Done)
    }

    pub fn is_started(&self) -> bool {
        self.status.values().any(|s| *s != NodeStatus::Pending)
    }

    /// The decomposition view: subtasks in execution order.
    pub fn decomposition(&self) -> Decomposition {
        Decomposition {
            schema_version: SchemaVersion,
            question: self.question.clone(),
            subtasks: self.order.iter().filter_map(|id| self.node(*id).cloned()).collect(),
            provenance: self.provenance,
        }
    }

    /// Applies an edit to a copy; the original is untouched on rejection.
    pub fn apply_edit(&self, edit: &Edit) -> Result<Workflow, WorkflowError> {
        if let Some(base) = edit.base_version {
            if base != self.version {
                return Err(WorkflowError::StaleVersion { base, current: self.version });
            }
        }
        let mut next = self.clone();
        next.apply_in_place(&edit.edit)?;
        if let Some(issue) = next.structural_issues().into_iter().next() {
            let reason = match issue.code.as_str() {
                "CYCLE" => RejectReason::Cycle,
                "UNKNOWN_NODE" => RejectReason::UnknownNode,
                "UNGROUNDED_PARAM" => RejectReason::UngroundedParam,
                _ => RejectReason::DepOrderViolation,
            };
            return Err(reject(reason, issue.message));
        }
        next.version += 1;
        next.provenance = Provenance::ModelEdited;
        Ok(next)
    }

    fn node_mut(&mut self, id: u32) -> Result<&mut Subtask, WorkflowError> {
        self.nodes.iter_mut().find(|n| n.id == id).ok_or_else(|| reject(RejectReason::UnknownNode, format!("no step {id}")))
    }

    fn apply_in_place(&mut self, edit: &EditKind) -> Result<(), WorkflowError> {
        match edit {
            EditKind::Reorder { order } => {
                let ids = self.node_ids();
                if let Some(bad) = order.iter().find(|id| !ids.contains(id)) {
                    return Err(reject(RejectReason::UnknownNode, format!("no step {bad}")));
                }
                if order.len() != ids.len() || order.iter().collect::<BTreeSet<_>>().len() != ids.len() {
                    return Err(reject(RejectReason::UnknownNode, "order must list every step exactly once"));
                }
                let started = self.order.iter().take_while(|id| self.status[*id] != NodeStatus::Pending).count();
                if order[..started] != self.order[..started] {
                    return Err(reject(RejectReason::DepOrderViolation, "started steps cannot move"));
                }
                if !is_topological(order, &ids, &self.edges) {
                    let e = self.edges.iter().find(|e| {
                        order.iter().position(|x| *x == e.producer) > order.iter().position(|x| *x == e.consumer)
                    });
                    let msg = e.map_or("order is not topological".to_owned(), |e| {
                        format!("step {} needs the result of step {}", e.consumer, e.producer)
                    });
                    return Err(reject(RejectReason::DepOrderViolation, msg));
                }
                self.order = order.clone();
            }
            EditKind::RemoveStep { node } => {
                self.node_mut(*node)?;
                if let Some(e) = self.edges.iter().find(|e| e.producer == *node) {
                    return Err(reject(
                        RejectReason::DepOrderViolation,
                        format!("step {} needs the result of step {node}", e.consumer),
                    ));
                }
                self.nodes.retain(|n| n.id != *node);
                self.edges.retain(|e| e.consumer != *node);
                self.order.retain(|id| id != node);
                self.status.remove(node);
            }
            EditKind::SetParam { node, key, value } => {
                let vocab = self.vocabulary.clone();
                let n = self.node_mut(*node)?;
                match value {
                    Some(v) => n.params.insert(key.clone(), v.clone()),
                    None => n.params.remove(key),
                };
                regrounded(n, &vocab, key)?;
            }
            EditKind::SelectInstance { node, instance } => {
                let vocab = self.vocabulary.clone();
                let (key, value) = if let Some(c) = vocab.category(instance) {
                    ("category", c)
                } else if let Some(s) = vocab.series_name(instance) {
                    ("series", s)
                } else {
                    return Err(reject(RejectReason::UngroundedParam, format!("`{instance}` is not on the chart")));
                };
                let n = self.node_mut(*node)?;
                n.params.insert(key.into(), value);
                regrounded(n, &vocab, key)?;
            }
        }
        Ok(())
    }

    fn structural_issues(&self) -> Vec<FlowIssue> {
        let mut out = Vec::new();
        let issue = |code: &str, message: String| FlowIssue { code: code.into(), message };
        let ids = self.node_ids();
        if ids.len() != self.nodes.len() {
            out.push(issue("UNKNOWN_NODE", "duplicate step ids".into()));
        }
        for e in &self.edges {
            if !ids.contains(&e.producer) || !ids.contains(&e.consumer) {
                out.push(issue("UNKNOWN_NODE", format!("edge {} -> {} names a missing step", e.producer, e.consumer)));
            }
        }
        let from_deps: BTreeSet<Edge> =
            self.nodes.iter().flat_map(|n| n.deps.iter().map(|d| Edge { producer: *d, consumer: n.id })).collect();
        if from_deps != self.edges.iter().copied().collect() {
            out.push(issue("DEP_ORDER_VIOLATION", "edges disagree with step dependencies".into()));
        }
        if has_cycle(&ids, &self.edges) {
            out.push(issue("CYCLE", "dependencies form a cycle".into()));
        } else if !is_topological(&self.order, &ids, &self.edges) {
            out.push(issue("DEP_ORDER_VIOLATION", "order is not a topological order of the dependencies".into()));
        }
        for n in &self.nodes {
            if let Some(r) = n.target_region_ids.iter().find(|r| !self.vocabulary.region_ids.contains(r)) {
                out.push(issue("UNGROUNDED_PARAM", format!("step {} targets missing region {r}", n.id)));
            }
            if let Some(name) = self.vocabulary.ungrounded_param(&n.params) {
                out.push(issue("UNGROUNDED_PARAM", format!("step {} names `{name}`", n.id)));
            }
        }
        if self.status.keys().copied().collect::<BTreeSet<_>>() != ids {
            out.push(issue("UNKNOWN_NODE", "status does not cover exactly the steps".into()));
        }
        let active = self.status.values().filter(|s| **s == NodeStatus::Active).count();
        let mut seen_pending = false;
        let mut monotone = true;
        for id in &self.order {
            match self.status.get(id) {
                Some(NodeStatus::Pending) => seen_pending = true,
                Some(_) if seen_pending => monotone = false,
                _ => {}
            }
        }
        if active > 1 || !monotone {
            out.push(issue("DEP_ORDER_VIOLATION", "progress does not follow the order".into()));
        }
        out
    }

    /// Structural checks always run; a model verdict is recorded alongside
    /// and never changes them.
    pub fn validate(&self, model: Option<&dyn ModelClient>) -> FlowReport {
        let mut report = FlowReport { issues: self.structural_issues(), advisory: None, advisory_error: None };
        if let Some(m) = model {
            match modelclient::validate_flow(m, self) {
                Ok(v) => report.advisory = Some(v),
                Err(e) => report.advisory_error = Some(e.to_string()),
            }
        }
        report
    }

    /// Completes the active step, or the first pending one when nothing is
    /// active, and activates the next pending step. A flow of n steps is
    /// done after n advances.
    pub fn advance(&self) -> Result<Workflow, WorkflowError> {
        let mut next = self.clone();
        let current = self.active().or_else(|| self.order.iter().copied().find(|id| self.status[id] == NodeStatus::Pending));
        let Some(current) = current else { return Err(WorkflowError::WorkflowComplete) };
        next.status.insert(current, NodeStatus::Done);
        if let Some(n) = next.order.iter().copied().find(|id| next.status[id] == NodeStatus::Pending) {
            next.status.insert(n, NodeStatus::Active);
        }
        Ok(next)
    }

    /// Activates the first pending step if nothing is active.
    pub fn start(&self) -> Workflow {
        let mut next = self.clone();
        if next.active().is_none() {
            if let Some(n) = next.order.iter().copied().find(|id| next.status[id] == NodeStatus::Pending) {
                next.status.insert(n, NodeStatus::Active);
            }
        }
        next
    }
}

/// Re-derives targets and the instruction after a parameter change.
fn regrounded(n: &mut Subtask, vocab: &Vocabulary, key: &str) -> Result<(), WorkflowError> {
    if let Some(name) = vocab.ungrounded_param(&n.params) {
        return Err(reject(RejectReason::UngroundedParam, format!("`{name}` is not on the chart")));
    }
    if key == "field" && n.params.get("field").is_some_and(|f| !matches!(f.as_str(), "value" | "x" | "size")) {
        return Err(reject(RejectReason::UngroundedParam, "field must be value, x or size"));
    }
    if SERIES_KEYS.contains(&key) && !n.target_region_ids.is_empty() {
        let list = |k: &str| n.params.get(k).map(|v| split_list(v));
        let (s, c) = (list("series"), list("category"));
        let ids = vocab.marks_where(s.as_deref(), c.as_deref());
        if ids.is_empty() {
            return Err(reject(RejectReason::UngroundedParam, "no mark matches the parameters"));
        }
        n.target_region_ids = ids;
    }
    n.instruction = phrase(n.task_type, &n.params);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::rule_decompose;
    use crate::modelclient::{MockModel, Verdict};
    use crate::synth::{render, TaskBank};

    fn olympic() -> Workflow {
        let bank = TaskBank::bundled();
        let (_, gt) = render(bank.chart("olympic").unwrap()).unwrap();
        let refs = gt.region_refs();
        let q = &bank.tasks.iter().find(|t| t.chart_id == "olympic").unwrap().question;
        let dec = rule_decompose(q, &gt.spec, &refs).unwrap();
        Workflow::build(&dec, Vocabulary::new(&gt.spec, &refs))
    }

    #[test]
    fn build_preserves_structure() {
        let wf = olympic();
        assert_eq!(wf.nodes.len(), 4);
        assert_eq!(wf.order, vec![1, 2, 3, 4]);
        assert_eq!(wf.version, 1);
        assert!(wf.status.values().all(|s| *s == NodeStatus::Pending));
        assert!(wf.validate(None).is_valid());
        assert_eq!(wf.decomposition().subtasks, wf.nodes);
    }

    #[test]
    fn consumer_before_producer_is_rejected() {
        let wf = olympic();
        let err = wf.apply_edit(&Edit::new(Some(1), EditKind::Reorder { order: vec![2, 1, 3, 4] })).unwrap_err();
        assert_eq!(err.reason(), Some(RejectReason::DepOrderViolation));
        let err = wf.apply_edit(&Edit::new(None, EditKind::RemoveStep { node: 1 })).unwrap_err();
        assert_eq!(err.reason(), Some(RejectReason::DepOrderViolation));
        let err = wf.apply_edit(&Edit::new(None, EditKind::RemoveStep { node: 9 })).unwrap_err();
        assert_eq!(err.reason(), Some(RejectReason::UnknownNode));
        let err = wf.apply_edit(&Edit::new(Some(7), EditKind::RemoveStep { node: 4 })).unwrap_err();
        assert_eq!(err.code(), "STALE_VERSION");
    }

    #[test]
    fn series_change_retargets_and_rephrases() {
        let wf = olympic();
        let before = wf.node(1).unwrap().clone();
        let edited = wf
            .apply_edit(&Edit::new(Some(1), EditKind::SetParam { node: 1, key: "series".into(), value: Some("SILVER".into()) }))
            .unwrap();
        let after = edited.node(1).unwrap();
        assert_eq!(edited.version, 2);
        assert_eq!(edited.provenance, Provenance::ModelEdited);
        assert_ne!(after.target_region_ids, before.target_region_ids);
        assert_eq!(after.target_region_ids.len(), before.target_region_ids.len());
        assert!(after.instruction.contains("SILVER"));
        let err = wf
            .apply_edit(&Edit::new(None, EditKind::SetParam { node: 1, key: "series".into(), value: Some("PLATINUM".into()) }))
            .unwrap_err();
        assert_eq!(err.reason(), Some(RejectReason::UngroundedParam));
    }

    #[test]
    fn advancing_counts_steps() {
        let mut wf = olympic();
        for _ in 0..4 {
            wf = wf.advance().unwrap();
        }
        assert!(wf.is_complete());
        assert_eq!(wf.advance().unwrap_err(), WorkflowError::WorkflowComplete);
        let started = olympic().start();
        assert_eq!(started.active(), Some(1));
        let next = started.advance().unwrap();
        assert_eq!(next.active(), Some(2));
        assert_eq!(next.status[&1], NodeStatus::Done);
    }

    #[test]
    fn validation_reports_cycles_and_records_advisory() {
        let mut wf = olympic();
        wf.nodes[0].deps.push(4);
        wf.edges.push(Edge { producer: 4, consumer: 1 });
        assert!(wf.validate(None).has("CYCLE"));
        let ok = olympic();
        let mock = MockModel::from_corpus(42).unwrap();
        let report = ok.validate(Some(&mock));
        assert!(report.is_valid());
        assert_eq!(report.advisory.unwrap().verdict, Verdict::Consistent);
    }
}
