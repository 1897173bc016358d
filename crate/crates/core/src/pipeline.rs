//! End-to-end stage wiring shared by the CLI, the service and the eval harness.

use crate::decompose::{self, region_refs, DecompError, Decomposition, Vocabulary};
use crate::doc::SchemaVersion;
use crate::model::{ChartSpec, ImageSize};
use crate::modelclient::{self, ModelClient, ModelError};
use crate::raster::{self, Image, RasterError};
use crate::regiondetect::{detect, Detection};
use crate::semantics::{self, SemanticRegions, SemanticsError};
use crate::workflow::Workflow;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Raster(#[from] RasterError),
    #[error("{0}")]
    Model(#[from] ModelError),
    #[error("{0}")]
    Semantics(#[from] SemanticsError),
    #[error("{0}")]
    Decomp(#[from] DecompError),
}

impl PipelineError {
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::Raster(_) => "BAD_IMAGE",
            PipelineError::Model(e) => e.code(),
            PipelineError::Semantics(e) => e.code(),
            PipelineError::Decomp(e) => e.code(),
        }
    }

    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Raster(_) => "decode",
            PipelineError::Model(_) => "characterize",
            PipelineError::Semantics(_) => "semantics",
            PipelineError::Decomp(_) => "decompose",
        }
    }
}

/// A chart after characterization, detection, labelling and decoding.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub spec: ChartSpec,
    pub detection: Detection,
    pub regions: SemanticRegions,
    /// The chart with numbered region badges, as shown to the labeller.
    pub annotated_png: Vec<u8>,
}

impl Analysis {
    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::new(&self.spec, &region_refs(&self.regions.regions))
    }
}

pub fn analyze(png: &[u8], model: &dyn ModelClient) -> Result<Analysis, PipelineError> {
    let img = raster::decode_png(png)?;
    analyze_image(&img, png, model)
}

/// `png` must be the encoding of `img`; it is what the model sees.
pub fn analyze_image(img: &Image, png: &[u8], model: &dyn ModelClient) -> Result<Analysis, PipelineError> {
    let spec = modelclient::characterize(model, png)?;
    let detection = detect(img, spec.shape_class);
    let candidates = semantics::candidates(&detection);
    let mut regions = semantics::label_regions(img, candidates, model)?;
    let axes = semantics::detected_axes(&detection, &spec);
    semantics::decode_values(img, &spec, &axes, &mut regions);
    let annotated_png = raster::encode_png(&semantics::annotate_numbered(img, &regions));
    let regions = SemanticRegions {
        schema_version: SchemaVersion,
        image_size: ImageSize { width: img.width(), height: img.height() },
        source_digest: raster::pixel_digest(img),
        axes,
        regions,
    };
    Ok(Analysis { spec, detection, regions, annotated_png })
}

/// Decomposes `question` against an analysed chart and wraps the result in a
/// fresh workflow.
pub fn plan(spec: &ChartSpec, regions: &SemanticRegions, question: &str, model: &dyn ModelClient) -> Result<(Decomposition, Workflow), PipelineError> {
    let dec = decompose::decompose(question, spec, &regions.regions, model)?;
    let wf = Workflow::build(&dec, Vocabulary::new(spec, &region_refs(&regions.regions)));
    Ok((dec, wf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Role;
    use crate::modelclient::MockModel;
    use crate::synth::{render, TaskBank};

    #[test]
    fn olympic_end_to_end() {
        let bank = TaskBank::bundled();
        let (img, gt) = render(bank.chart("olympic").unwrap()).unwrap();
        let mock = MockModel::new([gt.clone()]);
        let analysis = analyze(&raster::encode_png(&img), &mock).unwrap();
        let marks = analysis.regions.regions.iter().filter(|r| r.role == Role::DataMark).count();
        assert_eq!(marks, gt.data_marks().count());
        let task = bank.tasks.iter().find(|t| t.chart_id == "olympic").unwrap();
        let (dec, wf) = plan(&analysis.spec, &analysis.regions, &task.question, &mock).unwrap();
        assert_eq!(wf.nodes.len(), dec.subtasks.len());
    }
}
