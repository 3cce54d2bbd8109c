//! Metrics, confidence intervals, precision simulation and the experiment suite.

mod experiment;
mod precision;
mod report;

pub use experiment::{
    apply_precision, derive_seed, evaluate_model, precision_seed, prepare_dataset, run_cell,
    run_experiment, train_variant, CellOutcome, CellSpec, DatasetSource, ExperimentConfig,
    ExperimentError, ExperimentResult, PreparedDataset, SuiteDataset, TrainingConfig,
};
pub use precision::{simulate_precision, PrecisionMode, PrecisionStats};
pub use report::{ci_table, render_svg, write_ci_csv, write_report_csv, CiRow};

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::net::Activation;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("AUROC needs both positive and negative samples")]
    SingleClass,
    #[error("scores and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no class has both positive and negative test samples")]
    NoEvaluableClass,
    #[error("a confidence interval needs at least 2 differences, got {0}")]
    TooFewRuns(usize),
    #[error("confidence level must be in (0, 1), got {0}")]
    BadLevel(f64),
    #[error("unknown variant `{0}`")]
    UnknownVariant(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// One-vs-rest AUROC via the Mann-Whitney rank sum, ties sharing their mean rank.
pub fn auroc_ovr(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // ranks are 1-based; doubled to stay integral under tie averaging
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let doubled_rank = (i + 1 + j) as u64;
        let positives = order[i..j].iter().filter(|&&k| labels[k]).count() as u64;
        rank_sum2 += doubled_rank * positives;
        i = j;
    }
    let (p, n) = (pos as u64, neg as u64);
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub event: String,
    pub support: usize,
    /// None when the test split lacks positives or negatives for this class.
    pub auroc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub dataset: String,
    pub variant: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: RunMeta,
    pub classes: Vec<ClassScore>,
    pub mauroc_unweighted: f64,
    pub mauroc_weighted: f64,
    pub mask_violation_rate: f64,
    pub samples: usize,
}

impl EvalReport {
    pub fn excluded(&self) -> Vec<&str> {
        self.classes
            .iter()
            .filter(|c| c.auroc.is_none())
            .map(|c| c.event.as_str())
            .collect()
    }

    pub fn auroc(&self, event: &str) -> Option<f64> {
        self.classes
            .iter()
            .find(|c| c.event == event)
            .and_then(|c| c.auroc)
    }
}

/// (unweighted, weighted) means over classes with a defined AUROC.
pub fn mauroc(classes: &[ClassScore]) -> Result<(f64, f64)> {
    let scored: Vec<(usize, f64)> = classes
        .iter()
        .filter_map(|c| c.auroc.map(|a| (c.support, a)))
        .collect();
    if scored.is_empty() {
        return Err(EvalError::NoEvaluableClass);
    }
    let unweighted = scored.iter().map(|(_, a)| a).sum::<f64>() / scored.len() as f64;
    let total: usize = scored.iter().map(|(s, _)| s).sum();
    let weighted = scored.iter().map(|&(s, a)| s as f64 * a).sum::<f64>() / total as f64;
    Ok((unweighted, weighted))
}

/// Scores a probability matrix (rows: samples, columns: `classes`).
pub fn evaluate(
    probabilities: ArrayView2<'_, f64>,
    labels: &[usize],
    classes: &[String],
    mask_violation_rate: f64,
    meta: RunMeta,
) -> Result<EvalReport> {
    if probabilities.nrows() != labels.len() {
        return Err(EvalError::LengthMismatch(
            probabilities.nrows(),
            labels.len(),
        ));
    }
    let scores: Vec<ClassScore> = classes
        .iter()
        .enumerate()
        .map(|(a, event)| {
            let truth: Vec<bool> = labels.iter().map(|&y| y == a).collect();
            let column = probabilities.column(a).to_vec();
            ClassScore {
                event: event.clone(),
                support: truth.iter().filter(|&&t| t).count(),
                auroc: auroc_ovr(&column, &truth).ok(),
            }
        })
        .collect();
    let (u, w) = mauroc(&scores)?;
    Ok(EvalReport {
        meta,
        classes: scores,
        mauroc_unweighted: u,
        mauroc_weighted: w,
        mask_violation_rate,
        samples: labels.len(),
    })
}

/// Mean ± t quantile · s/√n.
pub fn paired_ci(differences: &[f64], level: f64) -> Result<(f64, f64)> {
    let n = differences.len();
    if n < 2 {
        return Err(EvalError::TooFewRuns(n));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(EvalError::BadLevel(level));
    }
    let mean = differences.iter().sum::<f64>() / n as f64;
    let var = differences.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Ok((mean, mean));
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - (1.0 - level) / 2.0);
    let half = t * var.sqrt() / (n as f64).sqrt();
    Ok((mean - half, mean + half))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VariantId {
    #[serde(rename = "BASELINE")]
    Baseline,
    #[serde(rename = "S")]
    S,
    #[serde(rename = "M-R")]
    MR,
    #[serde(rename = "M-S")]
    MS,
    #[serde(rename = "M-S-DROP-UP")]
    MSDropUp,
    #[serde(rename = "M-S-DROP-DOWN")]
    MSDropDown,
}

impl VariantId {
    pub const ALL: [VariantId; 6] = [
        VariantId::Baseline,
        VariantId::S,
        VariantId::MR,
        VariantId::MS,
        VariantId::MSDropUp,
        VariantId::MSDropDown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantId::Baseline => "BASELINE",
            VariantId::S => "S",
            VariantId::MR => "M-R",
            VariantId::MS => "M-S",
            VariantId::MSDropUp => "M-S-DROP-UP",
            VariantId::MSDropDown => "M-S-DROP-DOWN",
        }
    }

    pub fn spec(self) -> VariantSpec {
        let (activation, mask_enabled, dropout_delta) = match self {
            VariantId::Baseline => (Activation::Relu, false, 0.0),
            VariantId::S => (Activation::Swish, false, 0.0),
            VariantId::MR => (Activation::Relu, true, 0.0),
            VariantId::MS => (Activation::Swish, true, 0.0),
            VariantId::MSDropUp => (Activation::Swish, true, 0.05),
            VariantId::MSDropDown => (Activation::Swish, true, -0.05),
        };
        VariantSpec {
            id: self,
            activation,
            mask_enabled,
            dropout_delta,
        }
    }
}

impl fmt::Display for VariantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantId {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        VariantId::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| EvalError::UnknownVariant(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub id: VariantId,
    pub activation: Activation,
    /// Mask both as extra input and as output stage.
    pub mask_enabled: bool,
    /// Added to the base dropout rate.
    pub dropout_delta: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn auroc_examples() {
        assert_eq!(
            auroc_ovr(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]),
            Ok(1.0)
        );
        assert_eq!(auroc_ovr(&[0.4; 4], &[false, true, false, true]), Ok(0.5));
        assert_eq!(auroc_ovr(&[0.9, 0.8, 0.3], &[true, false, true]), Ok(0.5));
        assert_eq!(
            auroc_ovr(&[0.9, 0.8], &[true, true]),
            Err(EvalError::SingleClass)
        );
    }

    fn class(support: usize, auroc: Option<f64>) -> ClassScore {
        ClassScore {
            event: String::new(),
            support,
            auroc,
        }
    }

    #[test]
    fn mauroc_examples() {
        assert_eq!(
            mauroc(&[class(1, Some(1.0)), class(3, Some(0.5))]),
            Ok((0.75, 0.625))
        );
        assert_eq!(
            mauroc(&[class(2, Some(1.0)), class(7, Some(1.0))]),
            Ok((1.0, 1.0))
        );
        assert_eq!(
            mauroc(&[class(2, Some(0.7)), class(0, None)]),
            Ok((0.7, 0.7))
        );
        assert_eq!(mauroc(&[class(0, None)]), Err(EvalError::NoEvaluableClass));
    }

    #[test]
    fn evaluate_lists_excluded_classes() {
        let p = array![[0.9, 0.1, 0.0], [0.2, 0.8, 0.0], [0.6, 0.4, 0.0]];
        let classes: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let r = evaluate(p.view(), &[0, 1, 0], &classes, 0.0, RunMeta::default()).unwrap();
        assert_eq!(r.excluded(), vec!["c"]);
        assert_eq!(r.auroc("a"), Some(1.0));
        assert_eq!(r.mauroc_unweighted, 1.0);
    }

    #[test]
    fn ci_examples() {
        assert_eq!(paired_ci(&[0.02; 4], 0.95), Ok((0.02, 0.02)));
        let (lo, hi) = paired_ci(&[-0.1, 0.1, -0.3, 0.3], 0.95).unwrap();
        assert!((lo + hi).abs() < 1e-15);
        let (lo, hi) = paired_ci(&[0.01, 0.02, 0.03], 0.95).unwrap();
        // t(2, 0.975) = 4.302652729696142
        let half = 4.302_652_729_696_142 * 0.01 / 3f64.sqrt();
        assert!((lo - (0.02 - half)).abs() < 1e-9);
        assert!((hi - (0.02 + half)).abs() < 1e-9);
        assert_eq!(paired_ci(&[0.5], 0.95), Err(EvalError::TooFewRuns(1)));
    }

    #[test]
    fn variants_parse_and_describe() {
        assert_eq!("m-s".parse::<VariantId>(), Ok(VariantId::MS));
        assert!("X".parse::<VariantId>().is_err());
        let s = VariantId::S.spec();
        assert!(!s.mask_enabled && s.activation == Activation::Swish);
        let mr = VariantId::MR.spec();
        assert!(mr.mask_enabled && mr.activation == Activation::Relu);
        assert_eq!(VariantId::MSDropUp.spec().dropout_delta, 0.05);
    }
}
