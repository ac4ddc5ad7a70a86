//! Command-line front end.
//!
//! Every subcommand's flags may also come from a TOML config file whose
//! tables are named after the subcommands and whose keys are the long flag
//! names. Flags given on the command line win. Boolean switches can only be
//! turned on from the command line, not off.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::assessor::{
    AssessmentBackend, AssessmentMode, MockBackend, PromptTemplates, RemoteBackend, RemoteConfig,
};
use crate::dataset::{
    build_reference_index, check_split_pattern, generate_synthetic, load_manifest, save_manifest,
    validate_split, ManifestRecord, SyntheticConfig, DEFAULT_PER_SPLIT,
};
use crate::evaluation::{
    aggregate, aggregate_presence_prf, emit_report, read_predictions, write_report, Averaging,
    ReportFormat,
};
use crate::grid::{parse_case, PowerFlowOptions};
use crate::index::{EmbeddingSet, EntryFilter, VectorIndex};
use crate::pipeline::{
    score_predictions, write_k_sweep, write_leave_one_out, write_predictions,
    write_random_vs_similar, Pipeline, DEFAULT_K_SWEEP,
};
use crate::sim::{
    default_models, emit_simulation_report, format_metrics_table, load_sites, parse_synth_spec,
    run_scenario, synthetic_sites, DayProfiles, ModelSpec, ScenarioConfig,
};

/// Failure classes mapped to exit codes 2 and 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Box<dyn std::error::Error + Send + Sync>),
}

impl<E: std::error::Error + Send + Sync + 'static> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(Box::new(e))
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn runtime(msg: impl Into<String>) -> CliError {
    CliError::Runtime(msg.into().into())
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "pvrag",
    version,
    about = "Rooftop PV retrieval, assessment, evaluation and grid impact simulation"
)]
pub struct Cli {
    /// TOML file with defaults for any subcommand flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a manifest, or generate a synthetic dataset, and report split counts.
    Ingest(IngestArgs),
    /// Build a reference index file from a manifest and embeddings.
    Index(IndexArgs),
    /// List the nearest references for one query.
    Retrieve(RetrieveArgs),
    /// Assess the EVAL split and write predictions as JSON lines.
    Assess(AssessArgs),
    /// Score prediction runs and write the accuracy report.
    Evaluate(EvaluateArgs),
    /// Run a retrieval ablation.
    Ablate(AblateArgs),
    /// Simulate feeder net load and voltages under descriptor errors.
    Simulate(SimulateArgs),
}

impl Command {
    fn section(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Index(_) => "index",
            Command::Retrieve(_) => "retrieve",
            Command::Assess(_) => "assess",
            Command::Evaluate(_) => "evaluate",
            Command::Ablate(_) => "ablate",
            Command::Simulate(_) => "simulate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Plain,
    Rag,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationKind {
    KSweep,
    RandomVsSimilar,
    LeaveOneOut,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct IngestArgs {
    /// Manifest CSV to validate.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Generate a label-clustered synthetic dataset instead.
    #[arg(long)]
    pub synthetic: bool,
    /// Output directory for the synthetic manifest and embeddings.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Number of default cities in the synthetic dataset.
    #[arg(long)]
    pub cities: Option<usize>,
    #[arg(long)]
    pub per_split: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub prevalence: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub city_weight: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Expected EVAL records per city.
    #[arg(long)]
    pub expect_eval: Option<usize>,
    /// Expected REFERENCE records per city.
    #[arg(long)]
    pub expect_reference: Option<usize>,
    /// Fail when any city violates the expected pattern.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct DataArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Embedding file (PVEB).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Prebuilt reference index (PVIX); built from the manifest when absent.
    #[arg(long)]
    pub index: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct IndexArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// City whose references are left out.
    #[arg(long)]
    pub leave_out: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct RetrieveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Query record id.
    #[arg(long)]
    pub query: Option<String>,
    #[arg(short, long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub leave_out: Option<String>,
    /// CSV output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct BackendArgs {
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Directory with prompt template overrides.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Maximum requests in flight.
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Attach reference images to RAG requests.
    #[arg(long)]
    pub attach_reference_images: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct AssessArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub backend: BackendArgs,
    #[arg(long, value_enum)]
    pub mode: Option<ModeKind>,
    #[arg(short, long)]
    pub k: Option<usize>,
    /// Seed for random reference draws.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hide each query's own city from retrieval.
    #[arg(long)]
    pub leave_out_own_city: bool,
    /// Predictions output (JSON lines).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Predictions file, one per run (repeatable).
    #[arg(long)]
    pub predictions: Vec<PathBuf>,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// csv or markdown.
    #[arg(long)]
    pub format: Option<String>,
    /// micro or macro.
    #[arg(long)]
    pub averaging: Option<String>,
    /// Presence precision/recall/F1 CSV.
    #[arg(long)]
    pub prf: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AblateArgs {
    #[arg(value_enum)]
    pub kind: AblationKind,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub backend: BackendArgs,
    /// K values for the sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub ks: Vec<usize>,
    #[arg(short, long)]
    #[serde(default)]
    pub k: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    pub seed: Option<u64>,
    /// CSV output file; stdout when absent.
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct SimulateArgs {
    /// Case file (MATPOWER format).
    #[arg(long)]
    pub case: Option<PathBuf>,
    /// Site CSV file or synth:N:seed.
    #[arg(long)]
    pub sites: Option<String>,
    #[arg(long)]
    pub alpha_load: Option<f64>,
    #[arg(long)]
    pub penetration: Option<f64>,
    #[arg(long)]
    pub under_bias: Option<f64>,
    #[arg(long)]
    pub per_panel_kw: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// name=a_q,a_ell (repeatable); the three default models when absent.
    #[arg(long)]
    pub model: Vec<String>,
    /// Directory with load.txt and/or pv.txt.
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub pf_tol: Option<f64>,
    #[arg(long)]
    pub pf_max_iter: Option<usize>,
}

/// Overlays command-line values onto a config-file section.
fn merge<T: Serialize + DeserializeOwned>(
    flags: &T,
    section: Option<&toml::Table>,
) -> CliResult<T> {
    let Some(section) = section else {
        return Ok(serde_json::from_value(serde_json::to_value(flags)?)?);
    };
    let mut base = serde_json::to_value(section)?;
    let over = serde_json::to_value(flags)?;
    if let (Some(base), Some(over)) = (base.as_object_mut(), over.as_object()) {
        for (k, v) in over {
            let given = match v {
                serde_json::Value::Null | serde_json::Value::Bool(false) => false,
                serde_json::Value::Array(a) => !a.is_empty(),
                _ => true,
            };
            if given || !base.contains_key(k) {
                base.insert(k.clone(), v.clone());
            }
        }
    }
    serde_json::from_value(base).map_err(|e| usage(format!("config file: {e}")))
}

fn load_config(path: &Path) -> CliResult<toml::Table> {
    let text =
        std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    text.parse::<toml::Table>()
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> CliResult<T> {
    v.clone()
        .ok_or_else(|| usage(format!("missing required flag --{flag}")))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// Writes to `path`, or stdout when `None`.
fn with_output(
    path: Option<&Path>,
    f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> CliResult {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            f(&mut w)
                .and_then(|_| w.flush())
                .map_err(|e| runtime(format!("{}: {e}", p.display())))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)
                .and_then(|_| lock.flush())
                .map_err(|e| runtime(format!("stdout: {e}")))
        }
    }
}

/// Parses `args` and runs the command, mapping failures to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("PVRAG_LOG")
        .format_timestamp(None)
        .try_init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("Run with --help for usage.");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            let mut src = e.source();
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(1)
        }
    }
}

pub fn run(cli: Cli) -> CliResult {
    let config = match &cli.config {
        Some(p) => Some(load_config(p)?),
        None => None,
    };
    let section = config
        .as_ref()
        .and_then(|c| c.get(cli.command.section()))
        .map(|v| {
            v.as_table().cloned().ok_or_else(|| {
                usage(format!(
                    "config: [{}] must be a table",
                    cli.command.section()
                ))
            })
        })
        .transpose()?;
    let remote = match config.as_ref().and_then(|c| c.get("backend")) {
        Some(v) => v
            .clone()
            .try_into::<RemoteConfig>()
            .map_err(|e| usage(format!("config [backend]: {e}")))?,
        None => RemoteConfig::default(),
    };
    let s = section.as_ref();
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(merge(a, s)?),
        Command::Index(a) => cmd_index(merge(a, s)?),
        Command::Retrieve(a) => cmd_retrieve(merge(a, s)?),
        Command::Assess(a) => cmd_assess(merge(a, s)?, remote),
        Command::Evaluate(a) => cmd_evaluate(merge(a, s)?),
        Command::Ablate(a) => cmd_ablate(merge(a, s)?, remote),
        Command::Simulate(a) => cmd_simulate(merge(a, s)?),
    }
}

fn cmd_ingest(a: IngestArgs) -> CliResult {
    let records = if a.synthetic {
        let out_dir = required(&a.out_dir, "out-dir")?;
        let mut cfg = SyntheticConfig::default();
        if let Some(n) = a.cities {
            if n == 0 || n > cfg.cities.len() {
                return Err(usage(format!(
                    "--cities must be in 1..={}",
                    cfg.cities.len()
                )));
            }
            cfg = cfg.with_city_count(n);
        }
        cfg.per_split = a.per_split.unwrap_or(cfg.per_split);
        cfg.dim = a.dim.unwrap_or(cfg.dim);
        cfg.pv_prevalence = a.prevalence.unwrap_or(cfg.pv_prevalence);
        cfg.noise = a.noise.unwrap_or(cfg.noise);
        cfg.city_weight = a.city_weight.unwrap_or(cfg.city_weight);
        cfg.seed = a.seed.unwrap_or(cfg.seed);
        let ds = generate_synthetic(&cfg)?;
        std::fs::create_dir_all(&out_dir)
            .map_err(|e| runtime(format!("{}: {e}", out_dir.display())))?;
        save_manifest(out_dir.join("manifest.csv"), &ds.records)?;
        ds.embeddings.save(out_dir.join("embeddings.pveb"))?;
        log::info!(
            "wrote {} records to {}",
            ds.records.len(),
            out_dir.display()
        );
        ds.records
    } else {
        load_manifest(required(&a.manifest, "manifest")?)?
    };
    let report = validate_split(&records)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let eval = a.expect_eval.unwrap_or(DEFAULT_PER_SPLIT);
    let reference = a.expect_reference.unwrap_or(DEFAULT_PER_SPLIT);
    let violations = check_split_pattern(&report.splits, eval, reference);
    with_output(None, |w| {
        writeln!(w, "city,eval,reference,status")?;
        for s in &report.splits {
            let ok = s.eval_ids.len() == eval && s.reference_ids.len() == reference;
            let city = if s.city.contains(',') {
                format!("\"{}\"", s.city)
            } else {
                s.city.clone()
            };
            writeln!(
                w,
                "{city},{},{},{}",
                s.eval_ids.len(),
                s.reference_ids.len(),
                if ok { "ok" } else { "violation" }
            )?;
        }
        Ok(())
    })?;
    for v in &violations {
        log::warn!("{v}");
    }
    if a.strict && !violations.is_empty() {
        return Err(runtime(format!(
            "{} cities violate the {eval}/{reference} pattern",
            violations.len()
        )));
    }
    Ok(())
}

struct Loaded {
    records: Vec<ManifestRecord>,
    embeddings: EmbeddingSet,
    index: VectorIndex,
}

fn load_data(d: &DataArgs) -> CliResult<Loaded> {
    let records = load_manifest(required(&d.manifest, "manifest")?)?;
    let embeddings = EmbeddingSet::load(required(&d.embeddings, "embeddings")?)?;
    let index = match &d.index {
        Some(p) => VectorIndex::load(p)?,
        None => build_reference_index(&records, &embeddings, None)?,
    };
    Ok(Loaded {
        records,
        embeddings,
        index,
    })
}

fn cmd_index(a: IndexArgs) -> CliResult {
    let records = load_manifest(required(&a.manifest, "manifest")?)?;
    let embeddings = EmbeddingSet::load(required(&a.embeddings, "embeddings")?)?;
    let out = required(&a.out, "out")?;
    let index = build_reference_index(&records, &embeddings, a.leave_out.as_deref())?;
    index.save(&out)?;
    println!("{} references, dim {}", index.len(), index.dim());
    Ok(())
}

fn cmd_retrieve(a: RetrieveArgs) -> CliResult {
    let query = required(&a.query, "query")?;
    let k = a.k.unwrap_or(5);
    if k == 0 {
        return Err(usage("-k must be at least 1"));
    }
    let data = load_data(&a.data)?;
    let embedding_ref = data
        .records
        .iter()
        .find(|r| r.id == query)
        .map(|r| r.embedding_ref.clone())
        .unwrap_or_else(|| query.clone());
    let embedding = data
        .embeddings
        .get(&embedding_ref)
        .ok_or_else(|| runtime(format!("unknown query id {query:?}")))?;
    let mut filter = EntryFilter::none().excluding_id(query.clone());
    if let Some(c) = &a.leave_out {
        filter = filter.excluding_city(c.clone());
    }
    let available = data.index.count_admitted(&filter);
    if k > available {
        log::warn!("k = {k} exceeds the {available} admitted references; listing all of them");
    }
    let hits = data.index.search_topk(embedding, k, &filter)?;
    with_output(a.out.as_deref(), |w| {
        writeln!(w, "rank,id,city,distance,similarity")?;
        for (i, h) in hits.iter().enumerate() {
            let city = if h.entry.city.contains(',') {
                format!("\"{}\"", h.entry.city)
            } else {
                h.entry.city.clone()
            };
            writeln!(
                w,
                "{},{},{city},{:.4},{:.4}",
                i + 1,
                h.entry.id,
                h.distance,
                h.similarity
            )?;
        }
        Ok(())
    })
}

fn make_backend(
    b: &BackendArgs,
    mut remote: RemoteConfig,
) -> CliResult<Box<dyn AssessmentBackend>> {
    match b.backend.unwrap_or(BackendKind::Mock) {
        BackendKind::Mock => Ok(Box::new(MockBackend)),
        BackendKind::Remote => {
            remote = remote.with_env();
            remote.attach_reference_images |= b.attach_reference_images;
            RemoteBackend::new(remote)
                .map(|r| Box::new(r) as Box<dyn AssessmentBackend>)
                .map_err(|e| usage(e.to_string()))
        }
    }
}

fn make_pipeline<'a>(
    data: &'a Loaded,
    backend: &'a dyn AssessmentBackend,
    b: &BackendArgs,
    attach: bool,
) -> CliResult<Pipeline<'a>> {
    let mut p = Pipeline::new(&data.records, &data.embeddings, &data.index, backend);
    if let Some(dir) = &b.templates {
        p.templates = PromptTemplates::from_dir(dir)?;
    }
    p.concurrency = b.concurrency.unwrap_or(4).max(1);
    if attach {
        p = p.attach_reference_images();
    }
    Ok(p)
}

fn cmd_assess(a: AssessArgs, remote: RemoteConfig) -> CliResult {
    let out = required(&a.out, "out")?;
    let k = a.k.unwrap_or(3);
    let mode = match a.mode.unwrap_or(ModeKind::Rag) {
        ModeKind::Plain => AssessmentMode::Plain,
        ModeKind::Rag => AssessmentMode::rag(k),
        ModeKind::Random if k == 0 => return Err(usage("random mode needs -k >= 1")),
        ModeKind::Random => AssessmentMode::Random {
            k,
            seed: a.seed.unwrap_or(0),
        },
    };
    let attach = a.backend.attach_reference_images || remote.attach_reference_images;
    let backend = make_backend(&a.backend, remote)?;
    let data = load_data(&a.data)?;
    let pipeline = make_pipeline(&data, backend.as_ref(), &a.backend, attach)?;
    let lines = pipeline.predict(mode, a.leave_out_own_city)?;
    with_output(Some(&out), |w| write_predictions(w, &lines))?;
    let failed = lines.iter().filter(|l| l.error.is_some()).count();
    println!(
        "{} queries assessed ({} mode, k={}), {failed} failed",
        lines.len(),
        mode.label(),
        mode.k()
    );
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> CliResult {
    let records = load_manifest(required(&a.manifest, "manifest")?)?;
    if a.predictions.is_empty() {
        return Err(usage("missing required flag --predictions"));
    }
    let format: ReportFormat = a
        .format
        .as_deref()
        .unwrap_or("csv")
        .parse()
        .map_err(usage)?;
    let averaging: Averaging = a
        .averaging
        .as_deref()
        .unwrap_or("micro")
        .parse()
        .map_err(usage)?;
    let mut runs = Vec::new();
    for p in &a.predictions {
        let f = File::open(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
        let preds = read_predictions(BufReader::new(f))?;
        runs.push(score_predictions(&records, &preds)?);
    }
    let table = aggregate(&runs, averaging)?;
    match &a.out {
        Some(p) => emit_report(&table, p, format)?,
        None => with_output(None, |w| write_report(&table, format, w))?,
    }
    if let Some(p) = &a.prf {
        let rows = aggregate_presence_prf(&runs)?;
        let f = |v: Option<(f64, f64)>| {
            v.map(|(m, s)| format!("{m},{s}"))
                .unwrap_or_else(|| ",".into())
        };
        with_output(Some(p), |w| {
            writeln!(
                w,
                "city,precision,precision_std,recall,recall_std,f1,f1_std,n_runs"
            )?;
            for r in &rows {
                let city = if r.city.contains(',') {
                    format!("\"{}\"", r.city)
                } else {
                    r.city.clone()
                };
                writeln!(
                    w,
                    "{city},{},{},{},{}",
                    f(r.precision),
                    f(r.recall),
                    f(r.f1),
                    r.n_runs
                )?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn cmd_ablate(a: AblateArgs, remote: RemoteConfig) -> CliResult {
    let attach = a.backend.attach_reference_images || remote.attach_reference_images;
    let backend = make_backend(&a.backend, remote)?;
    let data = load_data(&a.data)?;
    let pipeline = make_pipeline(&data, backend.as_ref(), &a.backend, attach)?;
    let k = a.k.unwrap_or(3);
    let out = a.out.as_deref();
    match a.kind {
        AblationKind::KSweep => {
            let ks = if a.ks.is_empty() {
                DEFAULT_K_SWEEP.to_vec()
            } else {
                a.ks.clone()
            };
            let rows = pipeline.k_sweep(&ks)?;
            with_output(out, |w| write_k_sweep(w, &rows))
        }
        AblationKind::RandomVsSimilar => {
            if k == 0 {
                return Err(usage("random-vs-similar needs -k >= 1"));
            }
            let paired = pipeline.random_vs_similar(k, a.seed.unwrap_or(0))?;
            with_output(out, |w| write_random_vs_similar(w, &paired))
        }
        AblationKind::LeaveOneOut => {
            if k == 0 {
                return Err(usage("leave-one-out needs -k >= 1"));
            }
            let rows = pipeline.leave_one_out(k)?;
            with_output(out, |w| write_leave_one_out(w, &rows))
        }
    }
}

fn cmd_simulate(a: SimulateArgs) -> CliResult {
    let case = required(&a.case, "case")?;
    let out = required(&a.out, "out")?;
    let defaults = ScenarioConfig::default();
    let cfg = ScenarioConfig {
        alpha_load: a.alpha_load.unwrap_or(defaults.alpha_load),
        penetration: a.penetration.unwrap_or(defaults.penetration),
        per_panel_kw: a.per_panel_kw.unwrap_or(defaults.per_panel_kw),
        under_bias: a.under_bias.unwrap_or(defaults.under_bias),
        seed: a.seed.unwrap_or(defaults.seed),
        ..defaults
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let models = if a.model.is_empty() {
        default_models()
    } else {
        a.model
            .iter()
            .map(|m| ModelSpec::parse(m).map_err(|e| usage(e.to_string())))
            .collect::<CliResult<Vec<_>>>()?
    };
    let pf = PowerFlowOptions {
        tol: a.pf_tol.unwrap_or(PowerFlowOptions::default().tol),
        max_iter: a
            .pf_max_iter
            .unwrap_or(PowerFlowOptions::default().max_iter),
    };
    if pf.tol.is_nan() || pf.tol <= 0.0 || pf.max_iter == 0 {
        return Err(usage(
            "--pf-tol must be positive and --pf-max-iter at least 1",
        ));
    }
    let net = parse_case(&case)?;
    let sites_spec = a
        .sites
        .clone()
        .unwrap_or_else(|| format!("synth:1000:{}", cfg.seed));
    let sites = if sites_spec.starts_with("synth:") {
        let (n, seed) = parse_synth_spec(&sites_spec)
            .ok_or_else(|| usage(format!("--sites {sites_spec:?} is not synth:N:seed")))?;
        synthetic_sites(&net, n, seed, None)?
    } else {
        load_sites(&sites_spec)?
    };
    let profiles = match &a.profiles {
        Some(dir) => DayProfiles::from_dir(dir)?,
        None => DayProfiles::default(),
    };
    let outcome = run_scenario(&net, &sites, &models, &profiles, &cfg, &pf)?;
    emit_simulation_report(&outcome, &out)?;
    print!("{}", format_metrics_table(&outcome));
    println!(
        "kappa {:.6}, true capacity {:.3} MW, {} sites, reports in {}",
        outcome.result.kappa,
        outcome.metrics[0].total_capacity_mw,
        sites.len(),
        out.display()
    );
    Ok(())
}
