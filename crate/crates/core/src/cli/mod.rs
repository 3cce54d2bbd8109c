//! The `reachmask` command line: one subcommand per pipeline stage, chained
//! through a JSON run manifest that records every artifact with its hash.

mod manifest;

pub use manifest::{Artifact, LogColumns, ModelEntry, RunManifest, MANIFEST_FILE};

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchgen::{generate_log, generate_net, GenSpec};
use crate::eval::{
    apply_precision, ci_table, derive_seed, evaluate_model, precision_seed, render_svg,
    run_experiment, train_variant, write_ci_csv, write_report_csv, EvalReport, ExperimentConfig,
    PrecisionMode, RunMeta, TrainingConfig, VariantId,
};
use crate::log::{
    parse_csv, parse_xes, split_log, write_canonical_csv, write_xes, CsvColumns, EventLog,
    TimeFormat, PAPER_SPLIT,
};
use crate::net::{load_model, save_model};
use crate::petri::{parse_pnml, write_pnml, PetriNet, PnmlOptions};
use crate::reach::{ReachabilityGraph, ReducedReachabilityGraph, DEFAULT_NODE_CAP};
use crate::replay::{
    build_dataset, estimate_decay_parameters, Dataset, DecayParameters, ReplayOptions, ReplayReport,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("manifest field `{field}`: {message}")]
    Manifest { field: String, message: String },
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error("{0}")]
    Reachability(String),
    #[error("not a workflow net:\n{0}")]
    Workflow(String),
    #[error("{0}")]
    Stage(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Manifest { .. } => "manifest",
            CliError::Input { .. } => "input",
            CliError::Reachability(_) => "reachability",
            CliError::Workflow(_) => "workflow",
            CliError::Stage(_) => "stage",
            CliError::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Manifest { .. } => 3,
            CliError::Input { .. } => 4,
            CliError::Reachability(_) | CliError::Workflow(_) => 5,
            CliError::Stage(_) => 6,
            CliError::Io(_) => 7,
        }
    }

    /// `{"error": kind, "message": ..., "field": ...}`
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({ "error": self.kind(), "message": self.to_string() });
        if let CliError::Manifest { field, .. } = self {
            v["field"] = serde_json::Value::String(field.clone());
        }
        v
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn input_err(path: &Path) -> impl FnOnce(String) -> CliError + '_ {
    move |message| CliError::Input {
        path: path.display().to_string(),
        message,
    }
}

fn stage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Stage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "reachmask",
    version,
    about = "Next-event prediction with reachability masks derived from a Petri net"
)]
pub struct Cli {
    /// Print failures to stderr as a JSON object.
    #[arg(long, global = true)]
    pub error_json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a block-structured workflow net and a log sampled from it.
    Gen(GenArgs),
    /// Validate a net, explore its reduced reachability graph, split the log and fit decay parameters.
    Enhance(EnhanceArgs),
    /// Replay the splits into feature datasets.
    Replay(ReplayArgs),
    /// Train one variant on the replayed training split.
    Train(TrainArgs),
    /// Score trained models on the test split.
    Evaluate(EvaluateArgs),
    /// Run a full multi-dataset, multi-seed suite from a TOML config.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    Off,
    Half,
    Pair,
}

impl From<PrecisionArg> for PrecisionMode {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Off => PrecisionMode::Off,
            PrecisionArg::Half => PrecisionMode::Half,
            PrecisionArg::Pair => PrecisionMode::Pair,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct LogArgs {
    /// Event log, XES or CSV (chosen by extension).
    #[arg(long)]
    pub log: PathBuf,
    /// CSV column holding the case id.
    #[arg(long, default_value = "case_id")]
    pub case_col: String,
    /// CSV column holding the activity label.
    #[arg(long, default_value = "label")]
    pub label_col: String,
    /// CSV column holding the timestamp.
    #[arg(long, default_value = "timestamp")]
    pub time_col: String,
    /// CSV timestamp format: `rfc3339`, `unix`, or a chrono strftime pattern.
    #[arg(long, default_value = "rfc3339")]
    pub time_format: String,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    /// TOML generator spec; flags below override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Block-tree depth.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Number of traces to sample.
    #[arg(long)]
    pub traces: Option<usize>,
    /// Per-trace probability of a swap or drop.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Probability of hidden routing transitions.
    #[arg(long)]
    pub hidden_probability: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub pnml: PathBuf,
    #[command(flatten)]
    pub log: LogArgs,
    /// Top-level seed; the split and every later stage derive theirs from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum number of markings explored before the net is declared unbounded.
    #[arg(long, default_value_t = DEFAULT_NODE_CAP)]
    pub node_cap: usize,
    /// Drop log labels the net does not know instead of failing.
    #[arg(long)]
    pub skip_unknown: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Add an END class and a sample after the last event of each trace.
    #[arg(long)]
    pub predict_end: bool,
    /// Format of the replay statistics file.
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// BASELINE, S, M-R, M-S, M-S-DROP-UP or M-S-DROP-DOWN.
    #[arg(long, default_value = "M-S")]
    pub variant: VariantId,
    /// Base dropout rate; the DROP variants offset it.
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Shrink training and test masks to simulate a more precise net.
    #[arg(long, value_enum, default_value_t = PrecisionArg::Off)]
    pub precision_sim: PrecisionArg,
    /// Overrides the manifest seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run index; models of the same run share their initialization seed.
    #[arg(long, default_value_t = 0)]
    pub run: usize,
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Only evaluate models of this variant.
    #[arg(long)]
    pub variant: Option<VariantId>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// Suite config (TOML).
    #[arg(
        long,
        conflicts_with = "manifest",
        required_unless_present = "manifest"
    )]
    pub config: Option<PathBuf>,
    /// Rerun the suite recorded in a previous experiment manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Also write reports as JSON.
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

/// Parses arguments, runs the command and maps failures to an exit code.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let error_json = cli.error_json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if error_json {
                eprintln!("{}", e.to_json());
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Enhance(a) => cmd_enhance(&a),
        Command::Replay(a) => cmd_replay(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Experiment(a) => cmd_experiment(&a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<Artifact> {
    fs::write(path, contents).map_err(io_err(path))?;
    Artifact::of(path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<Artifact> {
    write(
        path,
        serde_json::to_string_pretty(value).expect("serializable"),
    )
}

fn read_json<T: for<'de> Deserialize<'de>>(artifact: &Artifact) -> Result<T> {
    let text = fs::read_to_string(&artifact.path).map_err(io_err(&artifact.path))?;
    serde_json::from_str(&text).map_err(|e| input_err(&artifact.path)(e.to_string()))
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

pub fn load_net(path: &Path) -> Result<PetriNet> {
    let file = File::open(path).map_err(io_err(path))?;
    parse_pnml(BufReader::new(file), &PnmlOptions::default())
        .map_err(|e| input_err(path)(e.to_string()))
}

fn csv_columns(c: &LogColumns) -> CsvColumns {
    CsvColumns {
        case: c.case.clone(),
        label: c.label.clone(),
        time: c.time.clone(),
        time_format: TimeFormat::parse_flag(&c.time_format),
    }
}

pub fn load_log(path: &Path, columns: &LogColumns) -> Result<EventLog> {
    let file = File::open(path).map_err(io_err(path))?;
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let parsed = if is_csv {
        parse_csv(file, &csv_columns(columns))
    } else {
        parse_xes(BufReader::new(file))
    };
    parsed.map_err(|e| input_err(path)(e.to_string()))
}

pub fn cmd_gen(args: &GenArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            toml::from_str::<GenSpec>(&text).map_err(|e| input_err(p)(e.to_string()))?
        }
        None => GenSpec::default(),
    };
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(d) = args.depth {
        spec.depth = d;
    }
    if let Some(t) = args.traces {
        spec.trace_count = t;
    }
    if let Some(n) = args.noise {
        spec.noise_rate = n;
    }
    if let Some(h) = args.hidden_probability {
        spec.hidden_probability = h;
    }
    let net = generate_net(&spec).map_err(stage)?;
    let log = generate_log(&net, &spec).map_err(stage)?;
    create_dir(&args.out_dir)?;
    write(&args.out_dir.join("net.pnml"), write_pnml(&net))?;
    write(&args.out_dir.join("log.xes"), write_xes(&log))?;
    let mut csv = Vec::new();
    write_canonical_csv(&log, &mut csv).map_err(stage)?;
    write(&args.out_dir.join("log.csv"), csv)?;
    write(
        &args.out_dir.join("spec.toml"),
        toml::to_string(&spec).expect("spec serializes"),
    )?;
    println!(
        "generated {} places, {} transitions, {} traces, {} events into {}",
        net.num_places(),
        net.num_transitions(),
        log.len(),
        log.num_events(),
        args.out_dir.display()
    );
    Ok(())
}

/// Case ids of each split, in log order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub ratios: (f64, f64, f64),
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl SplitAssignment {
    fn select(log: &EventLog, ids: &[String]) -> EventLog {
        let keep: HashSet<&str> = ids.iter().map(String::as_str).collect();
        EventLog::new(
            log.traces
                .iter()
                .filter(|t| keep.contains(t.case_id.as_str()))
                .cloned()
                .collect(),
        )
    }
}

fn explore(
    net: &PetriNet,
    node_cap: usize,
) -> Result<(ReachabilityGraph, ReducedReachabilityGraph)> {
    let report = net.validate_workflow_net();
    if !report.is_valid() {
        return Err(CliError::Workflow(report.to_string()));
    }
    let rg = ReachabilityGraph::build(net, node_cap)
        .map_err(|e| CliError::Reachability(e.to_string()))?;
    let rgr = ReducedReachabilityGraph::build(&rg, net);
    for w in rgr.warnings() {
        ::log::warn!("{w}");
    }
    Ok((rg, rgr))
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "log".into())
}

pub fn cmd_enhance(args: &EnhanceArgs) -> Result<()> {
    let net = load_net(&args.pnml)?;
    let (rg, rgr) = explore(&net, args.node_cap)?;
    let columns = LogColumns {
        case: args.log.case_col.clone(),
        label: args.log.label_col.clone(),
        time: args.log.time_col.clone(),
        time_format: args.log.time_format.clone(),
    };
    let log = load_log(&args.log.log, &columns)?;
    let name = dataset_name(&args.log.log);
    let split_seed = derive_seed(args.seed, &format!("split/{name}"));
    let split = split_log(&log, PAPER_SPLIT, split_seed)
        .map_err(|e| input_err(&args.log.log)(e.to_string()))?;
    let options = ReplayOptions {
        skip_unknown: args.skip_unknown,
        ..Default::default()
    };
    let decay = estimate_decay_parameters(&net, &split.train, &options).map_err(stage)?;

    let out = &args.out_dir;
    create_dir(out)?;
    let ids = |l: &EventLog| l.traces.iter().map(|t| t.case_id.clone()).collect();
    let assignment = SplitAssignment {
        seed: split_seed,
        ratios: PAPER_SPLIT,
        train: ids(&split.train),
        validation: ids(&split.validation),
        test: ids(&split.test),
    };
    let mut m = RunManifest::new(args.seed);
    m.name = name;
    m.node_cap = args.node_cap;
    m.skip_unknown = args.skip_unknown;
    m.columns = columns;
    m.pnml = Some(Artifact::of(&args.pnml)?);
    m.log = Some(Artifact::of(&args.log.log)?);
    m.splits = Some(write_json(&out.join("splits.json"), &assignment)?);
    m.decay = Some(write_json(&out.join("decay.json"), &decay)?);
    m.alphabet = Some(write_json(&out.join("alphabet.json"), &net.alphabet())?);
    m.rgr = Some(write(&out.join("rgr.txt"), rgr.dump(&net))?);
    m.reports.insert(
        "rgr_dot".into(),
        write(&out.join("rgr.dot"), rgr.to_dot(&net))?,
    );
    m.reports.insert(
        "rg_dot".into(),
        write(&out.join("rg.dot"), rg.to_dot(&net))?,
    );
    m.save(&out.join(MANIFEST_FILE))?;
    println!(
        "{} markings, {} reduced nodes, {} events; {}/{}/{} traces; artifacts in {}",
        rg.num_nodes(),
        rgr.num_nodes(),
        net.alphabet().len(),
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        out.display()
    );
    Ok(())
}

/// Net, graph and split logs recorded in an enhanced manifest.
struct Enhanced {
    net: PetriNet,
    rgr: ReducedReachabilityGraph,
    decay: DecayParameters,
    splits: [EventLog; 3],
}

const SPLITS: [&str; 3] = ["train", "validation", "test"];

fn reload_enhanced(m: &RunManifest) -> Result<Enhanced> {
    let net = load_net(&m.require("pnml")?.path)?;
    let alphabet: Vec<String> = read_json(m.require("alphabet")?)?;
    if alphabet != net.alphabet() {
        return Err(CliError::Manifest {
            field: "alphabet".into(),
            message: "does not match the net's alphabet".into(),
        });
    }
    let (_, rgr) = explore(&net, m.node_cap)?;
    let decay: DecayParameters = read_json(m.require("decay")?)?;
    let assignment: SplitAssignment = read_json(m.require("splits")?)?;
    let log = load_log(&m.require("log")?.path, &m.columns)?;
    let splits = [
        SplitAssignment::select(&log, &assignment.train),
        SplitAssignment::select(&log, &assignment.validation),
        SplitAssignment::select(&log, &assignment.test),
    ];
    Ok(Enhanced {
        net,
        rgr,
        decay,
        splits,
    })
}

#[derive(Debug, Serialize)]
struct ReplayRow {
    split: &'static str,
    traces: usize,
    samples: usize,
    forced_firings: usize,
    missing_tokens: usize,
    hidden_firings: usize,
    mask_violations: usize,
    unmappable_labels: usize,
    off_model_samples: usize,
    mask_violation_rate: f64,
}

impl ReplayRow {
    fn new(split: &'static str, r: &ReplayReport) -> Self {
        ReplayRow {
            split,
            traces: r.traces,
            samples: r.samples,
            forced_firings: r.forced_firings,
            missing_tokens: r.missing_tokens,
            hidden_firings: r.hidden_firings,
            mask_violations: r.mask_violations,
            unmappable_labels: r.unmappable_labels,
            off_model_samples: r.off_model_samples,
            mask_violation_rate: r.mask_violation_rate(),
        }
    }
}

pub fn cmd_replay(args: &ReplayArgs) -> Result<()> {
    let mut m = RunManifest::load(&args.manifest)?;
    let dir = manifest_dir(&args.manifest);
    let e = reload_enhanced(&m)?;
    let options = ReplayOptions {
        skip_unknown: m.skip_unknown,
        predict_end: args.predict_end,
        ..Default::default()
    };
    let mut scaling = None;
    let mut rows = Vec::new();
    for (split, log) in SPLITS.iter().zip(&e.splits) {
        let (ds, report) = build_dataset(&e.net, &e.rgr, &e.decay, log, &options, scaling.as_ref())
            .map_err(stage)?;
        if scaling.is_none() {
            scaling = Some(ds.scaling.clone());
        }
        let stem = dir.join(split);
        ds.save(&stem).map_err(stage)?;
        m.datasets.insert(
            split.to_string(),
            Artifact::of(&stem.with_extension("bin"))?,
        );
        println!(
            "{split}: {} traces, {} samples, {} forced firings, violation rate {:.6}",
            report.traces,
            report.samples,
            report.forced_firings,
            report.mask_violation_rate()
        );
        rows.push(ReplayRow::new(split, &report));
    }
    let artifact = match args.format {
        OutputFormat::Json => write_json(&dir.join("replay.json"), &rows)?,
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(r).map_err(stage)?;
            }
            write(&dir.join("replay.csv"), w.into_inner().map_err(stage)?)?
        }
    };
    m.reports.insert("replay".into(), artifact);
    m.predict_end = args.predict_end;
    m.models.clear();
    m.save(&args.manifest)
}

fn load_split(m: &RunManifest, split: &str) -> Result<Dataset> {
    let field = format!("datasets.{split}");
    let artifact = m.require(&field)?;
    Dataset::load(&artifact.path.with_extension("")).map_err(|e| CliError::Manifest {
        field,
        message: e.to_string(),
    })
}

fn model_label(variant: VariantId, precision: PrecisionMode) -> String {
    match precision {
        PrecisionMode::Off => variant.to_string(),
        p => format!("{variant}+{}", p.as_str().to_ascii_uppercase()),
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut m = RunManifest::load(&args.manifest)?;
    let dir = manifest_dir(&args.manifest);
    let seed = args.seed.unwrap_or(m.seed);
    let variant = args.variant.spec();
    let precision: PrecisionMode = if variant.mask_enabled {
        args.precision_sim.into()
    } else {
        PrecisionMode::Off
    };
    let mut training = TrainingConfig::default();
    if let Some(d) = args.dropout {
        training.dropout = d;
    }
    if let Some(e) = args.max_epochs {
        training.max_epochs = e;
    }
    let reshape = |split: &str| -> Result<Dataset> {
        let ds = load_split(&m, split)?;
        apply_precision(
            &ds,
            precision,
            precision_seed(seed, &m.name, precision, args.run, split),
        )
        .map_err(stage)
    };
    let train = reshape("train")?;
    let validation = reshape("validation")?;
    let model_seed = derive_seed(seed, &format!("model/{}", args.run));
    let (model, history) =
        train_variant(&training, variant, &train, &validation, model_seed).map_err(stage)?;

    let label = model_label(args.variant, precision);
    let file = format!("model-{label}-run{}", args.run);
    let path = dir.join(format!("{file}.bin"));
    save_model(&model, &train.classes, &path).map_err(stage)?;
    write_json(&dir.join(format!("{file}.history.json")), &history)?;
    println!(
        "{label} run {}: {} epochs, best epoch {}, best validation loss {:.6}",
        args.run,
        history.epochs.len(),
        history.best_epoch,
        history
            .epochs
            .iter()
            .find(|e| e.epoch == history.best_epoch)
            .and_then(|e| e.val_loss)
            .unwrap_or(f64::NAN)
    );
    m.models.insert(
        format!("{label}/run{}", args.run),
        ModelEntry {
            artifact: Artifact::of(&path)?,
            variant: args.variant,
            precision,
            dropout: model.config.dropout,
            seed,
            run: args.run,
        },
    );
    if !m.variants.contains(&label) {
        m.variants.push(label);
    }
    m.save(&args.manifest)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let mut m = RunManifest::load(&args.manifest)?;
    let dir = manifest_dir(&args.manifest);
    let test = load_split(&m, "test")?;
    let selected: Vec<(&String, &ModelEntry)> = m
        .models
        .iter()
        .filter(|(_, e)| args.variant.is_none_or(|v| e.variant == v))
        .collect();
    if selected.is_empty() {
        return Err(CliError::Manifest {
            field: "models".into(),
            message: "no trained model matches; run `train` first".into(),
        });
    }
    let mut reports: Vec<EvalReport> = Vec::new();
    for (key, entry) in selected {
        let field = format!("models.{key}");
        let model =
            load_model(&entry.artifact.path, &test.classes).map_err(|e| CliError::Manifest {
                field: field.clone(),
                message: e.to_string(),
            })?;
        let seed = precision_seed(entry.seed, &m.name, entry.precision, entry.run, "test");
        let test = apply_precision(&test, entry.precision, seed).map_err(stage)?;
        let meta = RunMeta {
            dataset: m.name.clone(),
            variant: model_label(entry.variant, entry.precision),
            seed: derive_seed(entry.seed, &format!("model/{}", entry.run)),
        };
        let report = evaluate_model(&model, entry.variant.spec().mask_enabled, &test, meta)
            .map_err(stage)?;
        println!(
            "{}: weighted mAUROC {:.6}, unweighted mAUROC {:.6}",
            report.meta.variant, report.mauroc_weighted, report.mauroc_unweighted
        );
        reports.push(report);
    }
    let artifact = match args.format {
        OutputFormat::Json => write_json(&dir.join("evaluation.json"), &reports)?,
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            write_report_csv(&reports, &mut buf).map_err(stage)?;
            write(&dir.join("evaluation.csv"), buf)?
        }
    };
    m.reports.insert("evaluation".into(), artifact);
    m.save(&args.manifest)
}

pub fn cmd_experiment(args: &ExperimentArgs) -> Result<()> {
    let config_path = match (&args.config, &args.manifest) {
        (Some(c), _) => c.clone(),
        (None, Some(mp)) => RunManifest::load(mp)?.require("config")?.path.clone(),
        (None, None) => return Err(CliError::Usage("give --config or --manifest".into())),
    };
    let text = fs::read_to_string(&config_path).map_err(io_err(&config_path))?;
    let mut config =
        ExperimentConfig::from_toml(&text).map_err(|e| input_err(&config_path)(e.to_string()))?;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    let base = manifest_dir(&config_path);
    let result = run_experiment(&config, &base).map_err(stage)?;
    let reports: Vec<EvalReport> = result.reports().into_iter().cloned().collect();

    let out = &args.out_dir;
    create_dir(out)?;
    let mut m = RunManifest::new(config.seed);
    m.name = dataset_name(&config_path);
    m.node_cap = config.node_cap;
    m.predict_end = config.predict_end;
    m.config = Some(Artifact::of(&config_path)?);
    let mut buf = Vec::new();
    write_report_csv(&reports, &mut buf).map_err(stage)?;
    m.reports
        .insert("reports".into(), write(&out.join("reports.csv"), buf)?);
    let ci = ci_table(&reports, VariantId::Baseline.as_str());
    let mut buf = Vec::new();
    write_ci_csv(&ci, &mut buf).map_err(stage)?;
    m.reports
        .insert("ci".into(), write(&out.join("ci.csv"), buf)?);
    m.reports.insert(
        "plot".into(),
        write(
            &out.join("plot.svg"),
            render_svg(&ci, VariantId::Baseline.as_str()),
        )?,
    );
    if args.format == OutputFormat::Json {
        m.reports.insert(
            "reports_json".into(),
            write_json(&out.join("reports.json"), &result.outcomes)?,
        );
        m.reports
            .insert("ci_json".into(), write_json(&out.join("ci.json"), &ci)?);
    }
    for o in &result.outcomes {
        let label = o.cell.label();
        if !m.variants.contains(&label) {
            m.variants.push(label);
        }
    }
    m.save(&out.join(MANIFEST_FILE))?;
    for row in ci
        .iter()
        .filter(|r| r.scope == "pooled" && r.variant != VariantId::Baseline.as_str())
    {
        println!(
            "{} {} mAUROC delta {:+.6} [{:+.6}, {:+.6}] over {} pairs",
            row.variant, row.metric, row.mean, row.low, row.high, row.n
        );
    }
    println!(
        "{} models evaluated; reports in {}",
        result.outcomes.len(),
        out.display()
    );
    Ok(())
}
