//! Command-line entry points: corpus generation, single-stage runs, the
//! evaluation harness and the HTTP service.

use crate::doc::Document;
use crate::eval::{run_eval, to_junit, EvalOptions};
use crate::guidance;
use crate::decompose::{execute, DataTable, Decomposition};
use crate::model::ChartSpec;
use crate::modelclient::{Cassette, MockModel, ModelClient, RemoteConfig, RemoteModel};
use crate::pipeline::{self, PipelineError};
use crate::raster;
use crate::regiondetect::detect;
use crate::semantics::SemanticRegions;
use crate::service::{self, ServiceConfig};
use crate::synth::{corpus_from_bank, TaskBank};
use crate::workflow::Workflow;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "chartguide", version, about = "Chart parsing, task decomposition and visual guidance")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the synthetic corpus: one PNG and one ground-truth document per chart.
    Synth {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Task bank to render instead of the bundled one.
        #[arg(long)]
        task_bank: Option<PathBuf>,
    },
    /// Characterize a chart and identify its regions.
    Detect {
        image: PathBuf,
        /// Output document: semantic regions, or raw detection with --raw.
        #[arg(long)]
        out: PathBuf,
        /// Write the unlabelled detection instead of semantic regions.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        spec_out: Option<PathBuf>,
        /// Chart with numbered region badges.
        #[arg(long)]
        annotated_out: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Break a question into subtasks over an analysed chart.
    Decompose {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        regions: PathBuf,
        #[arg(long)]
        question: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workflow_out: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Render one overlay per subtask from a session directory holding
    /// chart.png, chartspec.json, regions.json and workflow.json or
    /// decomposition.json.
    Guide {
        dir: PathBuf,
        /// Defaults to `<dir>/guidance`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every task of a task bank repeatedly and score each trial.
    Eval {
        #[arg(long)]
        task_bank: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        trials: u32,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        junit: Option<PathBuf>,
        /// Directory for the first trial's per-step overlays.
        #[arg(long)]
        overlays: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Serve the session API over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long, default_value = "chartguide-store")]
        store: PathBuf,
        #[arg(long)]
        cors_origin: Option<String>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Write the JSON Schema of every document type.
    Schemas {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Mock,
    Cassette,
    Remote,
}

impl Backend {
    fn name(self) -> &'static str {
        match self {
            Backend::Mock => "mock",
            Backend::Cassette => "cassette",
            Backend::Remote => "remote",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value_t = Backend::Mock)]
    pub backend: Backend,
    /// Corpus seed; the mock knows every chart rendered with it.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Directory of `*.groundtruth.json` files for the mock.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub cassette: Option<PathBuf>,
    /// Record cassette misses through the mock instead of failing.
    #[arg(long)]
    pub record: bool,
    /// JSON config for the remote backend; environment variables otherwise.
    #[arg(long)]
    pub remote_config: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{stage}: {code}: {message}")]
    Stage { stage: &'static str, code: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Stage { .. } => 1,
        }
    }

    fn stage(stage: &'static str, code: &str, message: impl ToString) -> Self {
        CliError::Stage { stage, code: code.to_owned(), message: message.to_string() }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::stage(e.stage(), e.code(), e)
    }
}

fn io(stage: &'static str, path: &Path, e: std::io::Error) -> CliError {
    CliError::stage(stage, "IO_ERROR", format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Usage(format!("{}: no such file", path.display())),
        _ => CliError::Usage(format!("{}: {e}", path.display())),
    })
}

fn read_doc<T: Document>(path: &Path) -> Result<T, CliError> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| CliError::stage("parse", "PARSE_ERROR", format!("{}: {e}", path.display())))?;
    T::from_json(&text).map_err(|e| CliError::stage("parse", e.code(), format!("{}: {e}", path.display())))
}

fn write(stage: &'static str, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io(stage, dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| io(stage, path, e))
}

fn load_bank(path: Option<&Path>) -> Result<TaskBank, CliError> {
    path.map_or_else(|| Ok(TaskBank::bundled()), read_doc)
}

fn mock(args: &BackendArgs, bank: &TaskBank) -> Result<MockModel, CliError> {
    match &args.truth {
        Some(dir) if !dir.is_dir() => Err(CliError::Usage(format!("{}: no such directory", dir.display()))),
        Some(dir) => MockModel::from_dir(dir).map_err(|e| CliError::stage("model", "IO_ERROR", e)),
        None => {
            let corpus = corpus_from_bank(bank, args.seed).map_err(|e| CliError::stage("synth", e.code(), e))?;
            Ok(MockModel::new(corpus.into_iter().map(|e| e.truth)))
        }
    }
}

/// Builds the model client selected by `args`. The mock knows the charts of
/// `bank` rendered with the chosen seed.
pub fn model_client(args: &BackendArgs, bank: &TaskBank) -> Result<Arc<dyn ModelClient>, CliError> {
    Ok(match args.backend {
        Backend::Mock => Arc::new(mock(args, bank)?),
        Backend::Cassette => {
            let path = args.cassette.as_ref().ok_or_else(|| CliError::Usage("--backend cassette needs --cassette FILE".into()))?;
            let cassette = if args.record {
                Cassette::record(path, Box::new(mock(args, bank)?))
            } else {
                if !path.is_file() {
                    return Err(CliError::Usage(format!("{}: no such file", path.display())));
                }
                Cassette::replay(path)
            };
            Arc::new(cassette.map_err(|e| CliError::stage("model", "IO_ERROR", e))?)
        }
        Backend::Remote => {
            let cfg = match &args.remote_config {
                Some(p) => RemoteConfig::from_file(p),
                None => RemoteConfig::from_env(),
            };
            Arc::new(RemoteModel::new(cfg.map_err(CliError::Usage)?))
        }
    })
}

fn synth(seed: u64, out: &Path, bank: &TaskBank) -> Result<(), CliError> {
    let corpus = corpus_from_bank(bank, seed).map_err(|e| CliError::stage("synth", e.code(), e))?;
    for e in &corpus {
        let id = &e.data.chart_id;
        write("synth", &out.join(format!("{id}.png")), &raster::encode_png(&e.image))?;
        write("synth", &out.join(format!("{id}.groundtruth.json")), e.truth.to_json().as_bytes())?;
    }
    tracing::info!(charts = corpus.len(), out = %out.display(), "corpus written");
    Ok(())
}

struct DetectArgs<'a> {
    image: &'a Path,
    out: &'a Path,
    raw: bool,
    spec_out: Option<&'a Path>,
    annotated_out: Option<&'a Path>,
}

fn run_detect(a: DetectArgs, model: &dyn ModelClient) -> Result<(), CliError> {
    let png = read(a.image)?;
    let img = raster::decode_png(&png).map_err(PipelineError::from)?;
    if a.raw {
        let spec = crate::modelclient::characterize(model, &png).map_err(PipelineError::from)?;
        write("detect", a.out, detect(&img, spec.shape_class).to_json().as_bytes())?;
        if let Some(p) = a.spec_out {
            write("detect", p, spec.to_json().as_bytes())?;
        }
        return Ok(());
    }
    let analysis = pipeline::analyze_image(&img, &png, model)?;
    write("detect", a.out, analysis.regions.to_json().as_bytes())?;
    if let Some(p) = a.spec_out {
        write("detect", p, analysis.spec.to_json().as_bytes())?;
    }
    if let Some(p) = a.annotated_out {
        write("detect", p, &analysis.annotated_png)?;
    }
    Ok(())
}

fn run_decompose(spec: &Path, regions: &Path, question: &str, out: &Path, wf_out: Option<&Path>, model: &dyn ModelClient) -> Result<(), CliError> {
    let spec: ChartSpec = read_doc(spec)?;
    let regions: SemanticRegions = read_doc(regions)?;
    let (dec, wf) = pipeline::plan(&spec, &regions, question, model)?;
    write("decompose", out, dec.to_json().as_bytes())?;
    if let Some(p) = wf_out {
        write("decompose", p, wf.to_json().as_bytes())?;
    }
    Ok(())
}

fn run_guide(dir: &Path, out: &Path) -> Result<usize, CliError> {
    let img = raster::decode_png(&read(&dir.join("chart.png"))?).map_err(PipelineError::from)?;
    let spec: ChartSpec = read_doc(&dir.join("chartspec.json"))?;
    let regions: SemanticRegions = read_doc(&dir.join("regions.json"))?;
    let wf_path = dir.join("workflow.json");
    let wf = if wf_path.is_file() {
        read_doc::<Workflow>(&wf_path)?
    } else {
        let dec: Decomposition = read_doc(&dir.join("decomposition.json"))?;
        let vocab = crate::decompose::Vocabulary::new(&spec, &crate::decompose::region_refs(&regions.regions));
        Workflow::build(&dec, vocab)
    };
    let table = DataTable::from_regions(&regions.regions, &wf.vocabulary.categories);
    let trace = execute(&wf.decomposition(), &table).ok();
    let steps = guidance::plan_workflow(&wf, &regions, &spec, trace.as_ref(), None).map_err(|e| CliError::stage("guide", e.code(), e))?;
    for (i, step) in steps.iter().enumerate() {
        let overlay = guidance::render_overlay(&img, step, &regions);
        write("guide", &out.join(format!("step{}.png", i + 1)), &raster::encode_png(&overlay))?;
        write("guide", &out.join(format!("step{}.json", i + 1)), step.to_json().as_bytes())?;
    }
    Ok(steps.len())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { seed, out, task_bank } => synth(seed, &out, &load_bank(task_bank.as_deref())?),
        Command::Detect { image, out, raw, spec_out, annotated_out, backend } => {
            if !image.is_file() {
                return Err(CliError::Usage(format!("{}: no such file", image.display())));
            }
            let model = model_client(&backend, &TaskBank::bundled())?;
            let args = DetectArgs { image: &image, out: &out, raw, spec_out: spec_out.as_deref(), annotated_out: annotated_out.as_deref() };
            run_detect(args, model.as_ref())
        }
        Command::Decompose { spec, regions, question, out, workflow_out, backend } => {
            let model = model_client(&backend, &TaskBank::bundled())?;
            run_decompose(&spec, &regions, &question, &out, workflow_out.as_deref(), model.as_ref())
        }
        Command::Guide { dir, out } => {
            if !dir.is_dir() {
                return Err(CliError::Usage(format!("{}: no such directory", dir.display())));
            }
            let out = out.unwrap_or_else(|| dir.join("guidance"));
            let n = run_guide(&dir, &out)?;
            tracing::info!(steps = n, out = %out.display(), "guidance written");
            Ok(())
        }
        Command::Eval { task_bank, trials, out, junit, overlays, backend } => {
            if trials == 0 {
                return Err(CliError::Usage("--trials must be at least 1".into()));
            }
            let bank = load_bank(task_bank.as_deref())?;
            let model = model_client(&backend, &bank)?;
            let opts = EvalOptions { seed: backend.seed, trials, backend: backend.backend.name().into(), overlays: overlays.as_deref() };
            let report = run_eval(&bank, model.as_ref(), &opts).map_err(|e| CliError::stage("eval", "EVAL_ERROR", e))?;
            match &out {
                Some(p) => write("eval", p, report.to_json().as_bytes())?,
                None => println!("{}", report.to_json()),
            }
            if let Some(p) = &junit {
                write("eval", p, to_junit(&report).as_bytes())?;
            }
            eprintln!(
                "{}/{} correct ({:.2}%), G1 {} G2 {} G3 {}, deterministic {}",
                report.correct, report.total_trials, report.percent, report.g1_passed, report.g2_passed, report.g3_passed, report.deterministic
            );
            Ok(())
        }
        Command::Serve { listen, store, cors_origin, backend } => {
            let model = model_client(&backend, &TaskBank::bundled())?;
            let cfg = ServiceConfig { listen, store, cors_origin };
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::stage("serve", "IO_ERROR", e))?;
            rt.block_on(service::serve(cfg, model)).map_err(|e| CliError::stage("serve", "IO_ERROR", e))
        }
        Command::Schemas { out } => crate::schemas::write_all(&out).map_err(|e| io("schemas", &out, e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("chartguide").chain(args.iter().copied()))
    }

    #[test]
    fn eval_flags() {
        let cli = parse(&["eval", "--trials", "5", "--backend", "mock", "--seed", "7", "--out", "r.json", "--junit", "r.xml"]).unwrap();
        let Command::Eval { trials, backend, .. } = cli.command else { panic!("not eval") };
        assert_eq!((trials, backend.backend, backend.seed), (5, Backend::Mock, 7));
    }

    #[test]
    fn bad_invocation_exits_two() {
        assert_eq!(parse(&["eval", "--backend", "nope"]).unwrap_err().exit_code(), 2);
        let missing = run(parse(&["detect", "/no/such.png", "--out", "r.json"]).unwrap()).unwrap_err();
        assert_eq!(missing.exit_code(), 2);
        let cassette = run(parse(&["decompose", "--spec", "a", "--regions", "b", "--question", "q", "--out", "c", "--backend", "cassette"]).unwrap());
        assert_eq!(cassette.unwrap_err().exit_code(), 2);
    }
}
