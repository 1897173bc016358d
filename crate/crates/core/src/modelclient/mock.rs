use super::{
    decode_payload, Capability, DecomposeContext, FlowVerdict, LabelRequest, LabelResponse, ModelClient, ModelError,
    ModelRequest, ModelResponse, PhraseRequest, PhraseResponse, RefineRequest, RegionLabel, Verdict, VerifyRequest,
};
use crate::decompose::{self, Decomposition, Provenance, Refined, Subtask, Vocabulary};
use crate::doc::{Document, SchemaVersion};
use crate::model::Role;
use crate::raster;
use crate::regiondetect::KindGuess;
use crate::synth::{self, GroundTruth, SynthError};
use crate::workflow::Workflow;
use serde::Serialize;
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::Path;

/// Deterministic stand-in for every model capability: chart descriptions
/// and region labels come from synthetic ground truth looked up by pixel
/// digest, decomposition stages from the rule engine.
#[derive(Debug, Clone, Default)]
pub struct MockModel {
    truths: BTreeMap<String, GroundTruth>,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("payloads serialize")
}

impl MockModel {
    pub fn new(truths: impl IntoIterator<Item = GroundTruth>) -> Self {
        MockModel { truths: truths.into_iter().map(|t| (t.image_digest.clone(), t)).collect() }
    }

    /// Ground truth for every chart of the bundled corpus.
    pub fn from_corpus(seed: u64) -> Result<Self, SynthError> {
        Ok(MockModel::new(synth::generate_corpus(seed)?.into_iter().map(|e| e.truth)))
    }

    /// Reads every `*.groundtruth.json` file in `dir`.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let mut truths = Vec::new();
        let mut paths: Vec<_> = std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for p in paths {
            if p.to_string_lossy().ends_with(".groundtruth.json") {
                let text = std::fs::read_to_string(&p)?;
                let gt = GroundTruth::from_json(&text)
                    .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", p.display())))?;
                truths.push(gt);
            }
        }
        Ok(MockModel::new(truths))
    }

    pub fn add(&mut self, truth: GroundTruth) {
        self.truths.insert(truth.image_digest.clone(), truth);
    }

    pub fn truth(&self, digest: &str) -> Option<&GroundTruth> {
        self.truths.get(digest)
    }

    fn truth_for(&self, cap: Capability, digest: &str) -> Result<&GroundTruth, ModelError> {
        self.truth(digest).ok_or_else(|| ModelError::unsupported(cap, format!("no ground truth for image {digest}")))
    }

    fn characterize(&self, req: &ModelRequest) -> Result<Value, ModelError> {
        let cap = Capability::Characterize;
        let png = req.image.as_deref().ok_or_else(|| ModelError::unsupported(cap, "characterize needs an image"))?;
        let img = raster::decode_png(png).map_err(|e| ModelError::unsupported(cap, e.to_string()))?;
        Ok(to_value(&self.truth_for(cap, &raster::pixel_digest(&img))?.spec))
    }

    fn label(&self, req: &LabelRequest) -> Result<Value, ModelError> {
        let gt = self.truth_for(Capability::LabelRegions, &req.source_digest)?;
        let labels = req
            .regions
            .iter()
            .map(|c| {
                if c.kind == KindGuess::Text {
                    let t = gt.text_elements.iter().find(|t| t.bbox == c.bbox);
                    return match t {
                        Some(t) => RegionLabel { id: c.id, role: t.role, label: t.text.clone(), series: None, category: None },
                        None => RegionLabel {
                            id: c.id,
                            role: Role::Other,
                            label: c.text.clone().unwrap_or_default(),
                            series: None,
                            category: None,
                        },
                    };
                }
                let best = gt
                    .regions
                    .iter()
                    .map(|r| (r.bbox.iou(&c.bbox), r))
                    .filter(|(iou, _)| *iou > 0.0)
                    .map(|(iou, r)| (iou + if r.color == c.color { 1.0 } else { 0.0 }, r))
                    .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.id.cmp(&a.1.id)));
                match best {
                    Some((_, r)) => RegionLabel {
                        id: c.id,
                        role: r.role,
                        label: r.label.clone(),
                        series: r.series.clone(),
                        category: r.category.clone(),
                    },
                    None => RegionLabel { id: c.id, role: Role::Other, label: "unidentified region".into(), series: None, category: None },
                }
            })
            .collect();
        Ok(to_value(&LabelResponse { labels }))
    }

    fn vocabulary(ctx: &DecomposeContext) -> Vocabulary {
        Vocabulary::new(&ctx.spec, &ctx.regions)
    }
}

/// Draft steps copied without grounding, so local checks name the failure.
fn unrefined(refined_from: &crate::decompose::Draft) -> Vec<Subtask> {
    refined_from
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| Subtask {
            id: i as u32 + 1,
            task_type: s.task_type.unwrap_or(crate::decompose::TaskType::RetrieveValue),
            instruction: s.instruction.clone(),
            target_region_ids: Vec::new(),
            params: s.params.clone(),
            deps: s.consumes.iter().map(|c| *c as u32 + 1).collect(),
        })
        .collect()
}

impl ModelClient for MockModel {
    fn backend_id(&self) -> String {
        "mock".into()
    }

    fn call(&self, req: &ModelRequest) -> Result<ModelResponse, ModelError> {
        let cap = req.capability;
        let payload = match cap {
            Capability::Characterize => self.characterize(req)?,
            Capability::LabelRegions => self.label(&decode_payload(cap, &req.payload)?)?,
            Capability::DecomposeStage1 => {
                let ctx: DecomposeContext = decode_payload(cap, &req.payload)?;
                to_value(&decompose::breakdown(&ctx.question, &Self::vocabulary(&ctx)))
            }
            Capability::DecomposeStage2 => {
                let r: RefineRequest = decode_payload(cap, &req.payload)?;
                let refined = decompose::refine(&r.draft, &Self::vocabulary(&r.context)).unwrap_or_else(|_| Refined {
                    schema_version: SchemaVersion,
                    question: r.draft.question.clone(),
                    subtasks: unrefined(&r.draft),
                });
                to_value(&refined)
            }
            Capability::DecomposeStage3 => {
                let r: VerifyRequest = decode_payload(cap, &req.payload)?;
                let subtasks = decompose::verify(&r.refined.subtasks).unwrap_or_else(|_| r.refined.subtasks.clone());
                to_value(&Decomposition {
                    schema_version: SchemaVersion,
                    question: r.refined.question.clone(),
                    subtasks,
                    provenance: Provenance::RuleBased,
                })
            }
            Capability::ValidateFlow => {
                let wf: Workflow = decode_payload(cap, &req.payload)?;
                let report = wf.validate(None);
                let verdict = if report.is_valid() { Verdict::Consistent } else { Verdict::Inconsistent };
                let note = report.issues.iter().map(|i| i.code.as_str()).collect::<Vec<_>>().join(", ");
                to_value(&FlowVerdict { verdict, note })
            }
            Capability::PhraseInstruction => {
                let p: PhraseRequest = decode_payload(cap, &req.payload)?;
                to_value(&PhraseResponse { instruction: p.instruction })
            }
        };
        Ok(ModelResponse { payload, latency_ms: 0, backend: self.backend_id() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelclient::{characterize, ModelErrorKind};
    use crate::synth::{render, TaskBank};

    #[test]
    fn characterize_returns_ground_truth_spec() {
        let bank = TaskBank::bundled();
        let (img, gt) = render(bank.chart("bar_basic").unwrap()).unwrap();
        let mock = MockModel::new([gt.clone()]);
        let png = raster::encode_png(&img);
        assert_eq!(characterize(&mock, &png).unwrap(), gt.spec);
        let a = mock.call(&ModelRequest { capability: Capability::Characterize, payload: Value::Null, image: Some(png.clone()) });
        let b = mock.call(&ModelRequest { capability: Capability::Characterize, payload: Value::Null, image: Some(png) });
        assert_eq!(a.unwrap(), b.unwrap());
    }

    #[test]
    fn unknown_image_is_unsupported() {
        let mock = MockModel::default();
        let png = raster::encode_png(&raster::blank(10, 10, crate::model::Rgb::WHITE));
        let err = characterize(&mock, &png).unwrap_err();
        assert!(matches!(err.kind, ModelErrorKind::Unsupported { .. }));
    }
}
