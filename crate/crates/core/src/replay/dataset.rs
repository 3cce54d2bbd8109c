use std::fs;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    replay_log, DecayParameters, ReplayError, ReplayOptions, ReplayReport, Result, TimedStateSample,
};
use crate::log::EventLog;
use crate::petri::PetriNet;
use crate::reach::{MaskVector, ReducedReachabilityGraph};

pub const END_LABEL: &str = "END";

/// Per-place maximum token count seen in training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountScaling {
    pub max_counts: Vec<u64>,
}

impl CountScaling {
    pub fn fit(places: usize, samples: &[TimedStateSample]) -> Self {
        let mut max_counts = vec![0; places];
        for s in samples {
            for (m, &c) in max_counts.iter_mut().zip(&s.token_counts) {
                *m = (*m).max(c);
            }
        }
        CountScaling { max_counts }
    }

    /// c / (1 + train max)
    pub fn scale(&self, place: usize, count: u64) -> f64 {
        count as f64 / (1.0 + self.max_counts[place] as f64)
    }
}

/// Everything about a dataset except the feature matrix itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    pub columns: Vec<String>,
    pub places: Vec<String>,
    /// Output classes; ends with `END` when end prediction is on.
    pub classes: Vec<String>,
    pub scaling: CountScaling,
    pub labels: Vec<usize>,
    pub violations: Vec<bool>,
    pub off_model: Vec<bool>,
    pub case_ids: Vec<String>,
    pub positions: Vec<usize>,
    pub matrix_sha256: String,
}

/// Rows are `F ⊕ C_scaled ⊕ M ⊕ MSK` in trace order, then position.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub masks: Vec<MaskVector>,
    pub violations: Vec<bool>,
    pub off_model: Vec<bool>,
    pub case_ids: Vec<String>,
    pub positions: Vec<usize>,
    pub places: Vec<String>,
    pub classes: Vec<String>,
    pub scaling: CountScaling,
}

impl Dataset {
    pub fn from_samples(
        net: &PetriNet,
        samples: &[TimedStateSample],
        scaling: &CountScaling,
        predict_end: bool,
    ) -> Self {
        let p = net.num_places();
        let alphabet_len = net.alphabet().len();
        let mut classes = net.alphabet().to_vec();
        if predict_end {
            classes.push(END_LABEL.to_string());
        }
        let k = classes.len();
        let mut features = Array2::zeros((samples.len(), 3 * p + k));
        for (i, s) in samples.iter().enumerate() {
            let mut row = features.row_mut(i);
            for j in 0..p {
                row[j] = s.decay_values[j];
                row[p + j] = scaling.scale(j, s.token_counts[j]);
                row[2 * p + j] = s.marking.tokens()[j] as f64;
            }
            for j in s.mask.events() {
                row[3 * p + j] = 1.0;
            }
        }
        Dataset {
            features,
            labels: samples
                .iter()
                .map(|s| s.next_event.class(alphabet_len))
                .collect(),
            masks: samples.iter().map(|s| s.mask.clone()).collect(),
            violations: samples
                .iter()
                .map(|s| s.mask_violation(alphabet_len))
                .collect(),
            off_model: samples.iter().map(|s| s.off_model).collect(),
            case_ids: samples.iter().map(|s| s.case_id.to_string()).collect(),
            positions: samples.iter().map(|s| s.position).collect(),
            places: net.places().to_vec(),
            classes,
            scaling: scaling.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_places(&self) -> usize {
        self.places.len()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Width of the timed state part `F ⊕ C ⊕ M`.
    pub fn state_width(&self) -> usize {
        3 * self.num_places()
    }

    pub fn width(&self) -> usize {
        self.features.ncols()
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut cols = Vec::with_capacity(self.width());
        for prefix in ["F", "C", "M"] {
            cols.extend(self.places.iter().map(|p| format!("{prefix}:{p}")));
        }
        cols.extend(self.classes.iter().map(|a| format!("MSK:{a}")));
        cols
    }

    /// Feature view with or without the trailing mask columns.
    pub fn inputs(&self, with_mask: bool) -> ArrayView2<'_, f64> {
        if with_mask {
            self.features.view()
        } else {
            self.features.slice(s![.., ..self.state_width()])
        }
    }

    pub fn violation_count(&self) -> usize {
        self.violations.iter().filter(|&&v| v).count()
    }

    /// Rows whose index satisfies `keep`, in order.
    pub fn select(&self, keep: impl Fn(usize) -> bool) -> Dataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        fn pick<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
            idx.iter().map(|&i| v[i].clone()).collect()
        }
        Dataset {
            features: self.features.select(Axis(0), &idx),
            labels: pick(&self.labels, &idx),
            masks: pick(&self.masks, &idx),
            violations: pick(&self.violations, &idx),
            off_model: pick(&self.off_model, &idx),
            case_ids: pick(&self.case_ids, &idx),
            positions: pick(&self.positions, &idx),
            places: self.places.clone(),
            classes: self.classes.clone(),
            scaling: self.scaling.clone(),
        }
    }

    /// Same rows without mask-violating samples.
    pub fn without_violations(&self) -> Dataset {
        self.select(|i| !self.violations[i])
    }

    /// Replaces masks (and the MSK columns), recomputing violation flags.
    pub fn with_masks(&self, masks: Vec<MaskVector>) -> Result<Dataset> {
        if masks.len() != self.len() {
            return Err(ReplayError::Dataset(format!(
                "{} masks for {} rows",
                masks.len(),
                self.len()
            )));
        }
        let mut out = self.clone();
        let start = self.state_width();
        for (i, m) in masks.iter().enumerate() {
            if m.len() != self.num_classes() {
                return Err(ReplayError::Dataset(format!(
                    "mask {i} has width {}, expected {}",
                    m.len(),
                    self.num_classes()
                )));
            }
            let mut row = out.features.row_mut(i);
            for (j, &b) in m.bits().iter().enumerate() {
                row[start + j] = if b { 1.0 } else { 0.0 };
            }
            out.violations[i] = !m.get(self.labels[i]);
        }
        out.masks = masks;
        Ok(out)
    }

    fn matrix_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(self.features.len() * 8);
        for v in self.features.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes
    }

    pub fn meta(&self) -> DatasetMeta {
        let bytes = self.matrix_bytes();
        DatasetMeta {
            rows: self.len(),
            cols: self.width(),
            dtype: "f64-le".into(),
            columns: self.column_names(),
            places: self.places.clone(),
            classes: self.classes.clone(),
            scaling: self.scaling.clone(),
            labels: self.labels.clone(),
            violations: self.violations.clone(),
            off_model: self.off_model.clone(),
            case_ids: self.case_ids.clone(),
            positions: self.positions.clone(),
            matrix_sha256: sha256_hex(&bytes),
        }
    }

    /// Writes `<stem>.bin` (row-major little-endian f64) and `<stem>.json`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let bytes = self.matrix_bytes();
        fs::write(stem.with_extension("bin"), &bytes)?;
        let meta = self.meta();
        fs::write(
            stem.with_extension("json"),
            serde_json::to_string_pretty(&meta)?,
        )?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Dataset> {
        let meta: DatasetMeta =
            serde_json::from_str(&fs::read_to_string(stem.with_extension("json"))?)?;
        let bytes = fs::read(stem.with_extension("bin"))?;
        if sha256_hex(&bytes) != meta.matrix_sha256 {
            return Err(ReplayError::Dataset(format!(
                "{} does not match the digest in its sidecar",
                stem.with_extension("bin").display()
            )));
        }
        if bytes.len() != meta.rows * meta.cols * 8 {
            return Err(ReplayError::Dataset(format!(
                "expected {}x{} f64 values, found {} bytes",
                meta.rows,
                meta.cols,
                bytes.len()
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let features = Array2::from_shape_vec((meta.rows, meta.cols), values)
            .map_err(|e| ReplayError::Dataset(e.to_string()))?;
        let start = 3 * meta.places.len();
        let masks = features
            .rows()
            .into_iter()
            .map(|r| MaskVector::from_bits(r.iter().skip(start).map(|&v| v != 0.0).collect()))
            .collect();
        Ok(Dataset {
            features,
            labels: meta.labels,
            masks,
            violations: meta.violations,
            off_model: meta.off_model,
            case_ids: meta.case_ids,
            positions: meta.positions,
            places: meta.places,
            classes: meta.classes,
            scaling: meta.scaling,
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Replays `log` and assembles its dataset. Without `scaling`, count scaling is
/// fitted on this log (the training log).
pub fn build_dataset(
    net: &PetriNet,
    rgr: &ReducedReachabilityGraph,
    params: &DecayParameters,
    log: &EventLog,
    options: &ReplayOptions,
    scaling: Option<&CountScaling>,
) -> Result<(Dataset, ReplayReport)> {
    let (samples, report) = replay_log(net, rgr, params, log, options)?;
    let fitted;
    let scaling = match scaling {
        Some(s) => s,
        None => {
            fitted = CountScaling::fit(net.num_places(), &samples);
            &fitted
        }
    };
    Ok((
        Dataset::from_samples(net, &samples, scaling, options.predict_end),
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::{Event, Trace};
    use crate::petri::parse_text_net;
    use crate::reach::{ReachabilityGraph, DEFAULT_NODE_CAP};

    fn fixture() -> (PetriNet, ReducedReachabilityGraph, EventLog) {
        let net = parse_text_net(
            "place p1 1\nplace p2\nplace p3\ntransition ta a\ntransition tb b\n\
             arc p1 ta\narc ta p2\narc p2 tb\narc tb p3\n",
        )
        .unwrap();
        let rg = ReachabilityGraph::build(&net, DEFAULT_NODE_CAP).unwrap();
        let rgr = ReducedReachabilityGraph::build(&rg, &net);
        let log = EventLog::new(vec![
            Trace::new("1", vec![Event::new("a", 0.0), Event::new("b", 3.0)]),
            Trace::new("2", vec![Event::new("a", 1.0), Event::new("b", 2.0)]),
        ]);
        (net, rgr, log)
    }

    #[test]
    fn width_and_layout() {
        let (net, rgr, log) = fixture();
        let params = DecayParameters::uniform(3, 5.0);
        let (ds, report) =
            build_dataset(&net, &rgr, &params, &log, &ReplayOptions::default(), None).unwrap();
        assert_eq!(ds.width(), 3 * 3 + 2);
        assert_eq!(ds.len(), 2);
        assert_eq!(report.samples, 2);
        assert_eq!(ds.labels, vec![1, 1]);
        assert_eq!(ds.case_ids, vec!["1", "2"]);
        let row: Vec<f64> = ds.features.row(0).to_vec();
        // F, C scaled by 1 + max(1), M, MSK
        assert_eq!(
            row,
            vec![1.0, 1.0, 0.0, 0.5, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]
        );
        assert_eq!(ds.inputs(false).ncols(), 9);
        assert_eq!(ds.column_names()[3], "C:p1");
        assert_eq!(ds.column_names()[10], "MSK:b");
    }

    #[test]
    fn empty_log_gives_zero_rows() {
        let (net, rgr, _) = fixture();
        let params = DecayParameters::uniform(3, 5.0);
        let (ds, _) = build_dataset(
            &net,
            &rgr,
            &params,
            &EventLog::default(),
            &ReplayOptions::default(),
            None,
        )
        .unwrap();
        assert_eq!(ds.len(), 0);
        assert_eq!(ds.width(), 11);
    }

    #[test]
    fn count_scaling_formula() {
        let scaling = CountScaling {
            max_counts: vec![9],
        };
        assert!((scaling.scale(0, 9) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn save_load_roundtrip() {
        let (net, rgr, log) = fixture();
        let params = DecayParameters::uniform(3, 5.0);
        let (ds, _) =
            build_dataset(&net, &rgr, &params, &log, &ReplayOptions::default(), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("train");
        ds.save(&stem).unwrap();
        let back = Dataset::load(&stem).unwrap();
        assert_eq!(back, ds);

        let mut bytes = fs::read(stem.with_extension("bin")).unwrap();
        bytes[0] ^= 1;
        fs::write(stem.with_extension("bin"), bytes).unwrap();
        assert!(Dataset::load(&stem).is_err());
    }

    #[test]
    fn replacing_masks_updates_columns_and_flags() {
        let (net, rgr, log) = fixture();
        let params = DecayParameters::uniform(3, 5.0);
        let (ds, _) =
            build_dataset(&net, &rgr, &params, &log, &ReplayOptions::default(), None).unwrap();
        let masks = vec![MaskVector::from_bits(vec![true, false]); 2];
        let changed = ds.with_masks(masks).unwrap();
        assert_eq!(changed.violation_count(), 2);
        assert_eq!(changed.features[[0, 9]], 1.0);
        assert_eq!(changed.features[[0, 10]], 0.0);
        assert_eq!(changed.without_violations().len(), 0);
    }
}
