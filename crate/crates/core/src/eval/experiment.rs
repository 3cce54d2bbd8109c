use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{
    ci_table, evaluate, simulate_precision, CiRow, EvalReport, PrecisionMode, RunMeta, VariantId,
    VariantSpec,
};
use crate::benchgen::{generate_log, generate_net, GenSpec};
use crate::log::{parse_xes, split_log, EventLog, PAPER_SPLIT};
use crate::net::{default_hidden_widths, Batch, MaskMode, MaskedMlp, MlpConfig, TrainHistory};
use crate::petri::{parse_pnml, PetriNet, PnmlOptions};
use crate::reach::{ReachabilityGraph, ReducedReachabilityGraph, DEFAULT_NODE_CAP};
use crate::replay::{
    build_dataset, estimate_decay_parameters, Dataset, DecayParameters, ReplayOptions, ReplayReport,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("{} cell(s) failed:\n{}", .0.len(), .0.join("\n"))]
    Cells(Vec<String>),
}

/// Stage seed derived from the top-level seed and a stage name.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(stage.as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Defaults to (2d, 2d, d, d) clamped to [16, 512].
    pub hidden_widths: Option<Vec<usize>>,
    pub mask_mode: MaskMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let base = MlpConfig::new(1, 1);
        TrainingConfig {
            dropout: base.dropout,
            learning_rate: base.learning_rate,
            batch_size: base.batch_size,
            max_epochs: base.max_epochs,
            patience: base.patience,
            hidden_widths: None,
            mask_mode: MaskMode::PostSoftmax,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteDataset {
    pub name: String,
    /// Synthetic dataset; its seed is replaced by one derived from the suite seed.
    #[serde(default)]
    pub generate: Option<GenSpec>,
    #[serde(default)]
    pub pnml: Option<PathBuf>,
    /// XES log.
    #[serde(default)]
    pub log: Option<PathBuf>,
    #[serde(default)]
    pub skip_unknown: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Generated(GenSpec),
    Files { pnml: PathBuf, log: PathBuf },
}

impl SuiteDataset {
    pub fn source(&self, base: &Path) -> Result<DatasetSource, String> {
        match (&self.generate, &self.pnml, &self.log) {
            (Some(g), None, None) => Ok(DatasetSource::Generated(g.clone())),
            (None, Some(p), Some(l)) => Ok(DatasetSource::Files {
                pnml: base.join(p),
                log: base.join(l),
            }),
            _ => Err(format!(
                "dataset `{}`: give either `generate` or both `pnml` and `log`",
                self.name
            )),
        }
    }
}

fn default_runs() -> usize {
    5
}

fn default_variants() -> Vec<VariantId> {
    VariantId::ALL.to_vec()
}

fn default_precision() -> Vec<PrecisionMode> {
    vec![PrecisionMode::Half, PrecisionMode::Pair]
}

fn default_node_cap() -> usize {
    DEFAULT_NODE_CAP
}

fn default_split() -> (f64, f64, f64) {
    PAPER_SPLIT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_variants")]
    pub variants: Vec<VariantId>,
    /// Precision simulations, each run as an extra M-S cell.
    #[serde(default = "default_precision")]
    pub precision: Vec<PrecisionMode>,
    #[serde(default)]
    pub predict_end: bool,
    #[serde(default = "default_node_cap")]
    pub node_cap: usize,
    #[serde(default = "default_split")]
    pub split: (f64, f64, f64),
    #[serde(default)]
    pub training: TrainingConfig,
    pub datasets: Vec<SuiteDataset>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.datasets.is_empty() {
            return bad("no datasets".into());
        }
        if self.runs == 0 {
            return bad("runs must be positive".into());
        }
        if !self.variants.contains(&VariantId::Baseline) {
            return bad("variants must include BASELINE, deltas are taken against it".into());
        }
        let mut names: Vec<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("duplicate dataset name `{}`", w[0]));
        }
        Ok(())
    }

    /// Cells in report order: dataset, then variant (precision cells after the
    /// plain variants), then run.
    pub fn cells(&self) -> Vec<CellSpec> {
        let mut kinds: Vec<(VariantId, PrecisionMode)> = self
            .variants
            .iter()
            .map(|&v| (v, PrecisionMode::Off))
            .collect();
        kinds.extend(
            self.precision
                .iter()
                .filter(|&&p| p != PrecisionMode::Off)
                .map(|&p| (VariantId::MS, p)),
        );
        let mut cells = Vec::new();
        for dataset in 0..self.datasets.len() {
            for &(variant, precision) in &kinds {
                for run in 0..self.runs {
                    cells.push(CellSpec {
                        dataset,
                        variant,
                        precision,
                        run,
                    });
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSpec {
    pub dataset: usize,
    pub variant: VariantId,
    pub precision: PrecisionMode,
    pub run: usize,
}

impl CellSpec {
    /// `M-S` or `M-S+PAIR`.
    pub fn label(&self) -> String {
        match self.precision {
            PrecisionMode::Off => self.variant.to_string(),
            p => format!("{}+{}", self.variant, p.as_str().to_ascii_uppercase()),
        }
    }
}

/// Net, graph and featurized splits for one dataset.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub name: String,
    pub net: PetriNet,
    pub rgr: ReducedReachabilityGraph,
    pub decay: DecayParameters,
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub replay: [ReplayReport; 3],
}

fn load_source(
    source: &DatasetSource,
    name: &str,
    seed: u64,
) -> Result<(PetriNet, EventLog), String> {
    match source {
        DatasetSource::Generated(spec) => {
            let spec = GenSpec {
                seed: derive_seed(seed, &format!("generate/{name}")),
                ..spec.clone()
            };
            let net = generate_net(&spec).map_err(|e| e.to_string())?;
            let log = generate_log(&net, &spec).map_err(|e| e.to_string())?;
            Ok((net, log))
        }
        DatasetSource::Files { pnml, log } => {
            let open = |p: &Path| {
                File::open(p)
                    .map(BufReader::new)
                    .map_err(|e| format!("{}: {e}", p.display()))
            };
            let net = parse_pnml(open(pnml)?, &PnmlOptions::default())
                .map_err(|e| format!("{}: {e}", pnml.display()))?;
            let log = parse_xes(open(log)?).map_err(|e| format!("{}: {e}", log.display()))?;
            Ok((net, log))
        }
    }
}

pub fn prepare_dataset(
    config: &ExperimentConfig,
    index: usize,
    base: &Path,
) -> Result<PreparedDataset, String> {
    let spec = &config.datasets[index];
    let name = spec.name.clone();
    let fail = |e: String| format!("dataset `{name}`: {e}");
    let source = spec.source(base)?;
    let (net, log) = load_source(&source, &name, config.seed).map_err(fail)?;
    let report = net.validate_workflow_net();
    if !report.is_valid() {
        return Err(fail(report.to_string()));
    }
    let split = split_log(
        &log,
        config.split,
        derive_seed(config.seed, &format!("split/{name}")),
    )
    .map_err(|e| fail(e.to_string()))?;
    let rg = ReachabilityGraph::build(&net, config.node_cap).map_err(|e| fail(e.to_string()))?;
    let rgr = ReducedReachabilityGraph::build(&rg, &net);
    let options = ReplayOptions {
        skip_unknown: spec.skip_unknown,
        predict_end: config.predict_end,
        ..Default::default()
    };
    let decay =
        estimate_decay_parameters(&net, &split.train, &options).map_err(|e| fail(e.to_string()))?;
    let (train, r_train) = build_dataset(&net, &rgr, &decay, &split.train, &options, None)
        .map_err(|e| fail(e.to_string()))?;
    let scaling = train.scaling.clone();
    let (validation, r_val) = build_dataset(
        &net,
        &rgr,
        &decay,
        &split.validation,
        &options,
        Some(&scaling),
    )
    .map_err(|e| fail(e.to_string()))?;
    let (test, r_test) = build_dataset(&net, &rgr, &decay, &split.test, &options, Some(&scaling))
        .map_err(|e| fail(e.to_string()))?;
    Ok(PreparedDataset {
        name,
        net,
        rgr,
        decay,
        train,
        validation,
        test,
        replay: [r_train, r_val, r_test],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub cell: CellSpec,
    pub report: EvalReport,
    pub epochs: usize,
}

/// Seed of the precision simulation for one split of one cell.
pub fn precision_seed(
    seed: u64,
    dataset: &str,
    mode: PrecisionMode,
    run: usize,
    split: &str,
) -> u64 {
    derive_seed(seed, &format!("precision/{dataset}/{mode}/{run}/{split}"))
}

/// The dataset with precision-simulated masks; unchanged for `Off`.
pub fn apply_precision(ds: &Dataset, mode: PrecisionMode, seed: u64) -> Result<Dataset, String> {
    if mode == PrecisionMode::Off {
        return Ok(ds.clone());
    }
    let (masks, _) = simulate_precision(&ds.masks, &ds.labels, mode, seed);
    ds.with_masks(masks).map_err(|e| e.to_string())
}

fn batch(ds: &Dataset, with_mask: bool) -> Batch<'_> {
    Batch {
        inputs: ds.inputs(with_mask),
        labels: &ds.labels,
        masks: Some(&ds.masks),
    }
}

/// Trains one variant on mask-consistent samples of `train` and `validation`.
pub fn train_variant(
    training: &TrainingConfig,
    variant: VariantSpec,
    train: &Dataset,
    validation: &Dataset,
    seed: u64,
) -> Result<(MaskedMlp, TrainHistory), String> {
    let train = train.without_violations();
    let validation = validation.without_violations();
    if train.is_empty() {
        return Err("no training samples".into());
    }
    let input_dim = if variant.mask_enabled {
        train.width()
    } else {
        train.state_width()
    };
    let mlp = MlpConfig {
        input_dim,
        output_dim: train.num_classes(),
        hidden_widths: training
            .hidden_widths
            .clone()
            .unwrap_or_else(|| default_hidden_widths(input_dim)),
        dropout: (training.dropout + variant.dropout_delta).clamp(0.0, 0.95),
        activation: variant.activation,
        mask_mode: if variant.mask_enabled {
            training.mask_mode
        } else {
            MaskMode::Off
        },
        learning_rate: training.learning_rate,
        momentum: 0.9,
        batch_size: training.batch_size,
        max_epochs: training.max_epochs,
        patience: training.patience,
        seed,
    };
    let mut model = MaskedMlp::new(mlp).map_err(|e| e.to_string())?;
    let history = model
        .train(
            &batch(&train, variant.mask_enabled),
            Some(&batch(&validation, variant.mask_enabled)),
        )
        .map_err(|e| e.to_string())?;
    Ok((model, history))
}

/// Scores a trained model on every sample of `test`.
pub fn evaluate_model(
    model: &MaskedMlp,
    mask_enabled: bool,
    test: &Dataset,
    meta: RunMeta,
) -> Result<EvalReport, String> {
    let probabilities = model
        .predict_proba(test.inputs(mask_enabled), Some(&test.masks))
        .map_err(|e| e.to_string())?;
    let violation_rate = if test.is_empty() {
        0.0
    } else {
        test.violation_count() as f64 / test.len() as f64
    };
    evaluate(
        probabilities.view(),
        &test.labels,
        &test.classes,
        violation_rate,
        meta,
    )
    .map_err(|e| e.to_string())
}

/// Trains and evaluates one model.
pub fn run_cell(
    config: &ExperimentConfig,
    data: &PreparedDataset,
    cell: CellSpec,
) -> Result<CellOutcome, String> {
    let variant = cell.variant.spec();
    let model_seed = derive_seed(config.seed, &format!("model/{}", cell.run));
    let fail = |e: String| format!("{} {} run {}: {e}", data.name, cell.label(), cell.run);
    let precision = if variant.mask_enabled {
        cell.precision
    } else {
        PrecisionMode::Off
    };
    let reshape = |ds: &Dataset, split: &str| {
        apply_precision(
            ds,
            precision,
            precision_seed(config.seed, &data.name, precision, cell.run, split),
        )
    };
    let train = reshape(&data.train, "train").map_err(fail)?;
    let validation = reshape(&data.validation, "validation").map_err(fail)?;
    let test = reshape(&data.test, "test").map_err(fail)?;
    let (model, history) =
        train_variant(&config.training, variant, &train, &validation, model_seed).map_err(fail)?;
    let meta = RunMeta {
        dataset: data.name.clone(),
        variant: cell.label(),
        seed: model_seed,
    };
    let report = evaluate_model(&model, variant.mask_enabled, &test, meta).map_err(fail)?;
    Ok(CellOutcome {
        cell,
        report,
        epochs: history.epochs.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub outcomes: Vec<CellOutcome>,
    pub ci: Vec<CiRow>,
}

impl ExperimentResult {
    pub fn reports(&self) -> Vec<&EvalReport> {
        self.outcomes.iter().map(|o| &o.report).collect()
    }
}

/// Runs every cell of the suite; relative dataset paths resolve against `base`.
pub fn run_experiment(
    config: &ExperimentConfig,
    base: &Path,
) -> Result<ExperimentResult, ExperimentError> {
    config.validate()?;
    let prepared: Vec<Result<PreparedDataset, String>> = (0..config.datasets.len())
        .into_par_iter()
        .map(|i| prepare_dataset(config, i, base))
        .collect();
    let errors: Vec<String> = prepared
        .iter()
        .filter_map(|r| r.as_ref().err().cloned())
        .collect();
    if !errors.is_empty() {
        return Err(ExperimentError::Cells(errors));
    }
    let prepared: Vec<PreparedDataset> =
        prepared.into_iter().map(|r| r.expect("checked")).collect();
    for d in &prepared {
        ::log::info!(
            "{}: {} places, {} transitions, {}/{}/{} samples",
            d.name,
            d.net.num_places(),
            d.net.num_transitions(),
            d.train.len(),
            d.validation.len(),
            d.test.len()
        );
    }

    let results: Vec<Result<CellOutcome, String>> = config
        .cells()
        .into_par_iter()
        .map(|cell| run_cell(config, &prepared[cell.dataset], cell))
        .collect();
    let mut outcomes = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => errors.push(e),
        }
    }
    if !errors.is_empty() {
        return Err(ExperimentError::Cells(errors));
    }
    let reports: Vec<EvalReport> = outcomes.iter().map(|o| o.report.clone()).collect();
    let ci = ci_table(&reports, VariantId::Baseline.as_str());
    Ok(ExperimentResult { outcomes, ci })
}
