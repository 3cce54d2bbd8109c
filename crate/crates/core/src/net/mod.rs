//! Feedforward classifier with a reachability-mask output stage.
//!
//! The network maps `S(τ) ⊕ MSK` (or `S(τ)` alone for unmasked variants) to a
//! probability vector over the event alphabet. With masking on, the softmax
//! output is multiplied by the mask and renormalized.

mod io;

pub use io::{load_model, save_model, MODEL_MAGIC, MODEL_VERSION};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reach::MaskVector;

/// Masked sums below this fall back to a uniform distribution over the mask.
pub const UNDERFLOW_GUARD: f64 = 1e-30;

/// Weight and bias gradients (or velocities) per layer.
type LayerPairs = Vec<(Array2<f64>, Array1<f64>)>;

/// Layer, weight position or `None` for a bias, bias index.
type ParamRef = (usize, Option<(usize, usize)>, usize);

#[derive(Debug, Error)]
pub enum NetError {
    #[error("mask has no set bit: the case is complete, there is no next event")]
    EndOfCase,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample {0}: true label is masked out")]
    LabelMasked(usize),
    #[error("sample {index}: label {label} outside {classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("expected {what} of width {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("model file: {0}")]
    Format(String),
    #[error("model was trained on a different alphabet")]
    AlphabetMismatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Swish,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    /// Plain softmax, masks ignored.
    Off,
    /// softmax, then Hadamard product with the mask and renormalization.
    PostSoftmax,
    /// Masked logits set to -inf before softmax.
    PreSoftmax,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

fn swish_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Swish => swish(x),
            Activation::Relu => x.max(0.0),
        }
    }

    fn grad(self, x: f64) -> f64 {
        match self {
            Activation::Swish => swish_grad(x),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// (2d, 2d, d, d) clamped to [16, 512].
pub fn default_hidden_widths(input_dim: usize) -> Vec<usize> {
    let c = |w: usize| w.clamp(16, 512);
    vec![
        c(2 * input_dim),
        c(2 * input_dim),
        c(input_dim),
        c(input_dim),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub dropout: f64,
    pub activation: Activation,
    pub mask_mode: MaskMode,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl MlpConfig {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        MlpConfig {
            input_dim,
            output_dim,
            hidden_widths: default_hidden_widths(input_dim),
            dropout: 0.2,
            activation: Activation::Swish,
            mask_mode: MaskMode::PostSoftmax,
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 64,
            max_epochs: 40,
            patience: 4,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(NetError::Config(
                "input and output widths must be positive".into(),
            ));
        }
        if self.hidden_widths.contains(&0) {
            return Err(NetError::Config("hidden widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NetError::Config(format!(
                "dropout {} not in [0, 1)",
                self.dropout
            )));
        }
        if self.batch_size == 0 {
            return Err(NetError::Config("batch size must be positive".into()));
        }
        if self.learning_rate.is_nan()
            || self.learning_rate <= 0.0
            || !(0.0..1.0).contains(&self.momentum)
        {
            return Err(NetError::Config(
                "learning rate must be positive, momentum in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// fan_in x fan_out
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMlp {
    pub config: MlpConfig,
    pub layers: Vec<Layer>,
}

/// Inputs, labels and (for masked models) masks of one split.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub inputs: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
    pub masks: Option<&'a [MaskVector]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

struct Trace {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Array2<f64>>,
    /// Inverted-dropout multipliers of hidden layers.
    keep: Vec<Option<Array2<f64>>>,
}

fn mask_matrix(masks: &[MaskVector], width: usize) -> Result<Array2<f64>> {
    let mut m = Array2::zeros((masks.len(), width));
    for (i, mask) in masks.iter().enumerate() {
        if mask.len() != width {
            return Err(NetError::Shape {
                what: "mask",
                expected: width,
                got: mask.len(),
            });
        }
        for j in mask.events() {
            m[[i, j]] = 1.0;
        }
    }
    Ok(m)
}

/// Softmax with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut row = Array1::from(logits.to_vec());
    softmax_row(row.view_mut());
    row.to_vec()
}

fn softmax_row(mut row: ndarray::ArrayViewMut1<'_, f64>) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    row.mapv_inplace(|z| (z - max).exp());
    let sum = row.sum();
    row.mapv_inplace(|e| e / sum);
}

/// Renormalizes a probability row restricted to the mask; all-ones masks pass
/// through untouched.
fn apply_mask_row(mut row: ndarray::ArrayViewMut1<'_, f64>, mask: ArrayView1<'_, f64>) {
    if mask.iter().all(|&b| b != 0.0) {
        return;
    }
    Zip::from(&mut row).and(&mask).for_each(|p, &b| *p *= b);
    let sum = row.sum();
    if sum < UNDERFLOW_GUARD {
        let set = mask.sum();
        ::log::warn!("masked probability mass {sum:e} underflowed, falling back to uniform");
        Zip::from(&mut row)
            .and(&mask)
            .for_each(|p, &b| *p = b / set);
    } else {
        row.mapv_inplace(|p| p / sum);
    }
}

/// `normalize(softmax(logits) ⊙ mask)`.
pub fn masked_softmax(logits: &[f64], mask: &MaskVector) -> Result<Vec<f64>> {
    if mask.len() != logits.len() {
        return Err(NetError::Shape {
            what: "mask",
            expected: logits.len(),
            got: mask.len(),
        });
    }
    if mask.is_zero() {
        return Err(NetError::EndOfCase);
    }
    let mut row = Array1::from(logits.to_vec());
    softmax_row(row.view_mut());
    let m = Array1::from(mask.to_f64());
    apply_mask_row(row.view_mut(), m.view());
    Ok(row.to_vec())
}

impl MaskedMlp {
    /// He-uniform weights from the config seed, zero biases.
    pub fn new(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut dims = vec![config.input_dim];
        dims.extend(&config.hidden_widths);
        dims.push(config.output_dim);
        let layers = dims
            .windows(2)
            .map(|w| {
                let limit = (6.0 / w[0] as f64).sqrt();
                Layer {
                    weights: Array2::from_shape_fn((w[0], w[1]), |_| {
                        rng.random_range(-limit..limit)
                    }),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Ok(MaskedMlp { config, layers })
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn uses_mask(&self) -> bool {
        self.config.mask_mode != MaskMode::Off
    }

    fn check_inputs(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.config.input_dim {
            return Err(NetError::Shape {
                what: "input",
                expected: self.config.input_dim,
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Logits for a batch; dropout is drawn from `rng` when given.
    fn logits(
        &self,
        x: ArrayView2<'_, f64>,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (Array2<f64>, Trace) {
        let last = self.layers.len() - 1;
        let mut trace = Trace {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(last),
            keep: Vec::with_capacity(last),
        };
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = a.dot(&layer.weights) + &layer.bias;
            trace.inputs.push(a);
            if i == last {
                return (z, trace);
            }
            let mut h = z.mapv(|v| self.config.activation.apply(v));
            let keep = match rng.as_deref_mut() {
                Some(rng) if self.config.dropout > 0.0 => {
                    let p = self.config.dropout;
                    let scale = 1.0 / (1.0 - p);
                    let k = Array2::from_shape_fn(h.raw_dim(), |_| {
                        if rng.random::<f64>() < p {
                            0.0
                        } else {
                            scale
                        }
                    });
                    h *= &k;
                    Some(k)
                }
                _ => None,
            };
            trace.pre.push(z);
            trace.keep.push(keep);
            a = h;
        }
        unreachable!("network has an output layer")
    }

    fn probabilities(&self, logits: &mut Array2<f64>, masks: Option<&Array2<f64>>) {
        match (self.config.mask_mode, masks) {
            (MaskMode::PreSoftmax, Some(m)) => {
                Zip::from(logits.rows_mut())
                    .and(m.rows())
                    .for_each(|mut row, mask| {
                        Zip::from(&mut row).and(&mask).for_each(|z, &b| {
                            if b == 0.0 {
                                *z = f64::NEG_INFINITY
                            }
                        });
                        softmax_row(row);
                    });
            }
            (MaskMode::PostSoftmax, Some(m)) => {
                Zip::from(logits.rows_mut())
                    .and(m.rows())
                    .for_each(|mut row, mask| {
                        softmax_row(row.view_mut());
                        apply_mask_row(row, mask);
                    });
            }
            _ => logits.rows_mut().into_iter().for_each(softmax_row),
        }
    }

    fn batch_masks(
        &self,
        masks: Option<&[MaskVector]>,
        rows: usize,
    ) -> Result<Option<Array2<f64>>> {
        if !self.uses_mask() {
            return Ok(None);
        }
        let masks = masks.ok_or(NetError::Config("masked model needs masks".into()))?;
        if masks.len() != rows {
            return Err(NetError::Shape {
                what: "mask list",
                expected: rows,
                got: masks.len(),
            });
        }
        if masks.iter().any(MaskVector::is_zero) {
            return Err(NetError::EndOfCase);
        }
        mask_matrix(masks, self.config.output_dim).map(Some)
    }

    /// Probability rows for a batch (inference mode).
    pub fn predict_proba(
        &self,
        x: ArrayView2<'_, f64>,
        masks: Option<&[MaskVector]>,
    ) -> Result<Array2<f64>> {
        self.check_inputs(&x)?;
        let m = self.batch_masks(masks, x.nrows())?;
        let (mut z, _) = self.logits(x, None);
        self.probabilities(&mut z, m.as_ref());
        Ok(z)
    }

    /// Probabilities for one input; dropout applies only with `train_rng`.
    pub fn forward(
        &self,
        input: &[f64],
        mask: Option<&MaskVector>,
        train_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| NetError::Format(e.to_string()))?;
        self.check_inputs(&x)?;
        let masks = mask.map(|m| vec![m.clone()]);
        let m = self.batch_masks(masks.as_deref(), 1)?;
        let (mut z, _) = self.logits(x, train_rng);
        self.probabilities(&mut z, m.as_ref());
        Ok(z.row(0).to_vec())
    }

    /// Argmax with ties going to the lowest index.
    pub fn predict(&self, input: &[f64], mask: Option<&MaskVector>) -> Result<(usize, Vec<f64>)> {
        let p = self.forward(input, mask, None)?;
        Ok((argmax(&p), p))
    }

    /// Mean cross-entropy of the (masked) probabilities.
    pub fn loss(&self, data: &Batch<'_>) -> Result<f64> {
        if data.labels.is_empty() {
            return Err(NetError::EmptyDataset);
        }
        let p = self.predict_proba(data.inputs, data.masks)?;
        Ok(cross_entropy(&p, data.labels))
    }

    /// Gradients of the mean masked cross-entropy, layer by layer.
    fn gradients(
        &self,
        x: ArrayView2<'_, f64>,
        labels: &[usize],
        masks: Option<&Array2<f64>>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> (f64, LayerPairs) {
        let n = x.nrows() as f64;
        let (mut delta, trace) = self.logits(x, rng);
        self.probabilities(&mut delta, masks);
        let loss = cross_entropy(&delta, labels);
        // d(-log q_y)/dz = q - y, for plain and masked softmax alike
        for (i, &y) in labels.iter().enumerate() {
            delta[[i, y]] -= 1.0;
        }
        delta /= n;
        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let gw = trace.inputs[i].t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weights.t());
                if let Some(k) = &trace.keep[i - 1] {
                    back *= k;
                }
                let act = self.config.activation;
                Zip::from(&mut back)
                    .and(&trace.pre[i - 1])
                    .for_each(|d, &z| *d *= act.grad(z));
                delta = back;
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        (loss, grads)
    }

    fn validate_batch(&self, data: &Batch<'_>) -> Result<()> {
        self.check_inputs(&data.inputs)?;
        if data.labels.len() != data.inputs.nrows() {
            return Err(NetError::Shape {
                what: "label list",
                expected: data.inputs.nrows(),
                got: data.labels.len(),
            });
        }
        for (i, &y) in data.labels.iter().enumerate() {
            if y >= self.config.output_dim {
                return Err(NetError::LabelOutOfRange {
                    index: i,
                    label: y,
                    classes: self.config.output_dim,
                });
            }
            if self.uses_mask() {
                if let Some(m) = data.masks.and_then(|m| m.get(i)) {
                    if !m.get(y) {
                        return Err(NetError::LabelMasked(i));
                    }
                }
            }
        }
        Ok(())
    }

    /// Mini-batch SGD with momentum and early stopping on validation loss.
    /// The weights of the best validation epoch are kept.
    pub fn train(
        &mut self,
        train: &Batch<'_>,
        validation: Option<&Batch<'_>>,
    ) -> Result<TrainHistory> {
        if train.labels.is_empty() {
            return Err(NetError::EmptyDataset);
        }
        self.validate_batch(train)?;
        if let Some(v) = validation {
            self.validate_batch(v)?;
        }
        let masks = self.batch_masks(train.masks, train.labels.len())?;
        let val = validation.filter(|v| !v.labels.is_empty());

        let cfg = self.config.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut velocity: LayerPairs = self
            .layers
            .iter()
            .map(|l| {
                (
                    Array2::zeros(l.weights.raw_dim()),
                    Array1::zeros(l.bias.len()),
                )
            })
            .collect();
        let mut order: Vec<usize> = (0..train.labels.len()).collect();
        let mut history = TrainHistory::default();
        let mut best: Option<(f64, Vec<Layer>)> = None;
        let mut stale = 0;

        for epoch in 0..cfg.max_epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let x = train.inputs.select(Axis(0), chunk);
                let y: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
                let m = masks.as_ref().map(|m| m.select(Axis(0), chunk));
                let (loss, grads) = self.gradients(x.view(), &y, m.as_ref(), Some(&mut rng));
                total += loss * chunk.len() as f64;
                for ((layer, v), (gw, gb)) in self.layers.iter_mut().zip(&mut velocity).zip(grads) {
                    v.0.zip_mut_with(&gw, |v, &g| *v = cfg.momentum * *v - cfg.learning_rate * g);
                    v.1.zip_mut_with(&gb, |v, &g| *v = cfg.momentum * *v - cfg.learning_rate * g);
                    layer.weights += &v.0;
                    layer.bias += &v.1;
                }
            }
            let train_loss = total / train.labels.len() as f64;
            let val_loss = val.map(|v| self.loss(v)).transpose()?;
            history.epochs.push(EpochStats {
                epoch,
                train_loss,
                val_loss,
            });
            let score = val_loss.unwrap_or(train_loss);
            if !score.is_finite() {
                ::log::warn!("epoch {epoch}: non-finite loss, stopping");
                history.stopped_early = true;
                break;
            }
            if best.as_ref().is_none_or(|(b, _)| score < *b) {
                best = Some((score, self.layers.clone()));
                history.best_epoch = epoch;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    history.stopped_early = true;
                    break;
                }
            }
        }
        if let Some((_, layers)) = best {
            self.layers = layers;
        }
        Ok(history)
    }

    /// Max relative error between backprop gradients and central differences
    /// over `count` randomly chosen parameters (all of them when `count` is 0).
    pub fn gradient_check(
        &self,
        input: &[f64],
        mask: Option<&MaskVector>,
        label: usize,
        epsilon: f64,
        count: usize,
        seed: u64,
    ) -> Result<f64> {
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec())
            .map_err(|e| NetError::Format(e.to_string()))?;
        self.check_inputs(&x.view())?;
        let masks = mask.map(|m| vec![m.clone()]);
        let m = self.batch_masks(masks.as_deref(), 1)?;
        if let Some(mask) = mask.filter(|_| self.uses_mask()) {
            if !mask.get(label) {
                return Err(NetError::LabelMasked(0));
            }
        }
        let (_, grads) = self.gradients(x.view(), &[label], m.as_ref(), None);

        let mut params: Vec<ParamRef> = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let (r, c) = layer.weights.dim();
            for i in 0..r {
                for j in 0..c {
                    params.push((l, Some((i, j)), 0));
                }
            }
            for j in 0..layer.bias.len() {
                params.push((l, None, j));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        params.shuffle(&mut rng);
        if count > 0 {
            params.truncate(count);
        }

        let loss_at = |model: &MaskedMlp| {
            let (mut z, _) = model.logits(x.view(), None);
            model.probabilities(&mut z, m.as_ref());
            cross_entropy(&z, &[label])
        };
        let mut probe = self.clone();
        let mut worst: f64 = 0.0;
        for (l, w, j) in params {
            let (analytic, original) = match w {
                Some(ij) => (grads[l].0[ij], self.layers[l].weights[ij]),
                None => (grads[l].1[j], self.layers[l].bias[j]),
            };
            let set = |model: &mut MaskedMlp, value: f64| match w {
                Some(ij) => model.layers[l].weights[ij] = value,
                None => model.layers[l].bias[j] = value,
            };
            set(&mut probe, original + epsilon);
            let up = loss_at(&probe);
            set(&mut probe, original - epsilon);
            let down = loss_at(&probe);
            set(&mut probe, original);
            let numeric = (up - down) / (2.0 * epsilon);
            worst = worst.max(relative_error(analytic, numeric));
        }
        Ok(worst)
    }
}

/// |a - b| / max(|a| + |b|, 1e-6); the floor keeps vanishing gradients from
/// turning rounding noise into large ratios.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

fn cross_entropy(p: &Array2<f64>, labels: &[usize]) -> f64 {
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -p[[i, y]].max(f64::MIN_POSITIVE).ln())
        .sum();
    total / labels.len() as f64
}
