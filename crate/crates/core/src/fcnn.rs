//! Fully-connected classifier head: rectified hidden layers, inverted dropout
//! after the first hidden layer, softmax output, Adam updates on mean
//! cross-entropy, and patience-based early stopping on validation accuracy.
//!
//! All arithmetic is 64-bit. Randomness comes from ChaCha8 streams derived
//! from the configured seed: stream 0 initializes weights, stream 1 shuffles
//! minibatches, stream 2 draws dropout masks.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::binio::{CountingWriter, DecodeError, OffsetReader};
use crate::features::FeatureSet;

pub const FCNN_MAGIC: [u8; 4] = *b"FCNN";
pub const FCNN_VERSION: u32 = 1;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_DROPOUT: u64 = 2;

#[derive(Debug, Error)]
pub enum FcnnError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("label {label} at row {row} is outside 0..{classes}")]
    Label {
        row: usize,
        label: usize,
        classes: usize,
    },
    #[error("training set is empty")]
    Empty,
    #[error("loss became non-finite during epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("FCNN decode error at offset {offset}: {reason}")]
    Format { offset: u64, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<DecodeError> for FcnnError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::Eof { offset } => FcnnError::Format {
                offset,
                reason: "truncated".into(),
            },
            DecodeError::Io(e) => FcnnError::Io(e),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FcnnConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    /// Applied after the first hidden layer only.
    pub dropout_rate: f64,
    pub classes: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
}

impl FcnnConfig {
    /// The 300 → dropout(0.5) → 100 → softmax(10) head.
    pub fn new(input_dim: usize) -> Self {
        FcnnConfig {
            input_dim,
            hidden: vec![300, 100],
            dropout_rate: 0.5,
            classes: 10,
            learning_rate: 1e-3,
            batch_size: 128,
            max_epochs: 200,
            patience: 10,
            min_delta: 0.0,
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<(), FcnnError> {
        let fail = |m: &str| Err(FcnnError::Config(m.to_owned()));
        if self.input_dim == 0 {
            return fail("input_dim must be >= 1");
        }
        if self.hidden.contains(&0) {
            return fail("hidden widths must be >= 1");
        }
        if self.classes < 2 {
            return fail("classes must be >= 2");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail("dropout_rate must be in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1");
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be >= 1");
        }
        if self.patience == 0 {
            return fail("patience must be >= 1");
        }
        if !(self.min_delta >= 0.0 && self.min_delta.is_finite()) {
            return fail("min_delta must be >= 0");
        }
        Ok(())
    }

    /// Layer widths from input to output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.classes);
        w
    }
}

/// Affine layer; `weights` is fan_in × fan_out.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    fn zeros_like(&self) -> DenseLayer {
        DenseLayer {
            weights: Array2::zeros(self.weights.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FcnnModel {
    layers: Vec<DenseLayer>,
    config: FcnnConfig,
    history: Vec<EpochRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub model: FcnnModel,
    pub best_val_accuracy: f64,
    pub best_epoch: usize,
    pub stop_epoch: usize,
    pub stopped_early: bool,
}

/// He-style uniform initialization with zero biases.
pub fn init_model(cfg: &FcnnConfig) -> Result<FcnnModel, FcnnError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(STREAM_INIT);
    let widths = cfg.widths();
    let layers = widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || {
                (2.0 * rng.random::<f64>() - 1.0) * limit
            });
            DenseLayer {
                weights,
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(FcnnModel {
        layers,
        config: cfg.clone(),
        history: Vec::new(),
    })
}

struct Trace {
    /// Input to each layer: x, then the (masked) activation of every hidden layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
    /// Scaled dropout masks per hidden layer, if applied.
    masks: Vec<Option<Array2<f64>>>,
    logits: Array2<f64>,
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean of `logsumexp(z) - z[y]` over rows.
fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logits.rows().into_iter().zip(labels) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / labels.len().max(1) as f64
}

fn argmax(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl FcnnModel {
    pub fn from_parts(config: FcnnConfig, layers: Vec<DenseLayer>) -> Result<Self, FcnnError> {
        config.validate()?;
        let widths = config.widths();
        if layers.len() != widths.len() - 1 {
            return Err(FcnnError::Config(format!(
                "{} layers given, configuration needs {}",
                layers.len(),
                widths.len() - 1
            )));
        }
        for (l, w) in layers.iter().zip(widths.windows(2)) {
            if l.weights.dim() != (w[0], w[1]) || l.bias.len() != w[1] {
                return Err(FcnnError::Config(format!(
                    "layer shape {:?}/{} does not match {}x{}",
                    l.weights.dim(),
                    l.bias.len(),
                    w[0],
                    w[1]
                )));
            }
            if l.weights
                .iter()
                .chain(l.bias.iter())
                .any(|v| !v.is_finite())
            {
                return Err(FcnnError::Config("non-finite parameter".into()));
            }
        }
        Ok(FcnnModel {
            layers,
            config,
            history: Vec::new(),
        })
    }

    pub fn config(&self) -> &FcnnConfig {
        &self.config
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<(), FcnnError> {
        if x.ncols() != self.config.input_dim {
            return Err(FcnnError::Dimension {
                expected: self.config.input_dim,
                found: x.ncols(),
            });
        }
        Ok(())
    }

    fn check_labels(&self, labels: &[usize], rows: usize) -> Result<(), FcnnError> {
        if labels.len() != rows {
            return Err(FcnnError::Dimension {
                expected: rows,
                found: labels.len(),
            });
        }
        if let Some((row, &label)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= self.config.classes)
        {
            return Err(FcnnError::Label {
                row,
                label,
                classes: self.config.classes,
            });
        }
        Ok(())
    }

    fn trace(&self, x: ArrayView2<'_, f64>, mut noise: Option<&mut dyn RngCore>) -> Trace {
        let hidden = self.layers.len() - 1;
        let keep = 1.0 - self.config.dropout_rate;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(hidden);
        let mut masks = Vec::with_capacity(hidden);
        let mut a = x.to_owned();
        for (l, layer) in self.layers[..hidden].iter().enumerate() {
            let z = a.dot(&layer.weights) + &layer.bias;
            let mut act = z.mapv(|v| v.max(0.0));
            let mask = match noise.as_deref_mut() {
                Some(rng) if l == 0 && self.config.dropout_rate > 0.0 => {
                    let mask = Array2::from_shape_simple_fn(act.raw_dim(), || {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    act *= &mask;
                    Some(mask)
                }
                _ => None,
            };
            inputs.push(std::mem::replace(&mut a, act));
            pre.push(z);
            masks.push(mask);
        }
        let out = &self.layers[hidden];
        let logits = a.dot(&out.weights) + &out.bias;
        inputs.push(a);
        Trace {
            inputs,
            pre,
            masks,
            logits,
        }
    }

    fn backward(&self, trace: &Trace, labels: &[usize]) -> Vec<DenseLayer> {
        let m = labels.len().max(1) as f64;
        let mut delta = softmax_rows(&trace.logits);
        for (mut row, &y) in delta.rows_mut().into_iter().zip(labels) {
            row[y] -= 1.0;
        }
        delta /= m;
        let mut grads: Vec<DenseLayer> = self.layers.iter().map(DenseLayer::zeros_like).collect();
        for l in (0..self.layers.len()).rev() {
            grads[l].weights = trace.inputs[l].t().dot(&delta);
            grads[l].bias = delta.sum_axis(Axis(0));
            if l == 0 {
                break;
            }
            let mut upstream = delta.dot(&self.layers[l].weights.t());
            if let Some(mask) = &trace.masks[l - 1] {
                upstream *= mask;
            }
            Zip::from(&mut upstream)
                .and(&trace.pre[l - 1])
                .for_each(|g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
            delta = upstream;
        }
        grads
    }

    /// Class probabilities, one row per input row.
    ///
    /// In [`Mode::Train`] inverted dropout is applied after the first hidden
    /// layer; masks come from `noise`, or from the configured seed when `None`.
    pub fn forward(
        &self,
        x: ArrayView2<'_, f64>,
        mode: Mode,
        noise: Option<&mut dyn RngCore>,
    ) -> Result<Array2<f64>, FcnnError> {
        self.check_input(&x)?;
        let trace = match mode {
            Mode::Infer => self.trace(x, None),
            Mode::Train => match noise {
                Some(rng) => self.trace(x, Some(rng)),
                None => {
                    let mut rng = dropout_rng(self.config.seed);
                    self.trace(x, Some(&mut rng))
                }
            },
        };
        Ok(softmax_rows(&trace.logits))
    }

    /// Post-activation outputs of every hidden layer (after dropout in train mode).
    pub fn hidden_activations(
        &self,
        x: ArrayView2<'_, f64>,
        mode: Mode,
        noise: Option<&mut dyn RngCore>,
    ) -> Result<Vec<Array2<f64>>, FcnnError> {
        self.check_input(&x)?;
        let noise = if mode == Mode::Train { noise } else { None };
        let mut trace = self.trace(x, noise);
        trace.inputs.remove(0);
        Ok(trace.inputs)
    }

    /// Inference-mode probabilities computed in row chunks.
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, FcnnError> {
        self.check_input(&x)?;
        const CHUNK: usize = 2048;
        let mut out = Array2::zeros((x.nrows(), self.config.classes));
        for start in (0..x.nrows()).step_by(CHUNK) {
            let end = (start + CHUNK).min(x.nrows());
            let p = softmax_rows(
                &self
                    .trace(x.slice(ndarray::s![start..end, ..]), None)
                    .logits,
            );
            out.slice_mut(ndarray::s![start..end, ..]).assign(&p);
        }
        Ok(out)
    }

    /// Argmax class per row, lowest index on ties.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>, FcnnError> {
        let p = self.predict_proba(x)?;
        Ok(p.rows().into_iter().map(argmax).collect())
    }

    pub fn accuracy(&self, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64, FcnnError> {
        self.check_labels(labels, x.nrows())?;
        if labels.is_empty() {
            return Ok(0.0);
        }
        let pred = self.predict(x)?;
        let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
        Ok(hits as f64 / labels.len() as f64)
    }

    /// Mean cross-entropy without dropout.
    pub fn loss(&self, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64, FcnnError> {
        self.check_input(&x)?;
        self.check_labels(labels, x.nrows())?;
        Ok(cross_entropy(&self.trace(x, None).logits, labels))
    }

    /// Mean cross-entropy and its parameter gradients, without dropout.
    pub fn loss_and_gradients(
        &self,
        x: ArrayView2<'_, f64>,
        labels: &[usize],
    ) -> Result<(f64, Vec<DenseLayer>), FcnnError> {
        self.check_input(&x)?;
        self.check_labels(labels, x.nrows())?;
        let trace = self.trace(x, None);
        Ok((
            cross_entropy(&trace.logits, labels),
            self.backward(&trace, labels),
        ))
    }
}

fn dropout_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_DROPOUT);
    rng
}

/// Adam moment estimates for every parameter.
struct Adam {
    m: Vec<DenseLayer>,
    v: Vec<DenseLayer>,
    step: i32,
    lr: f64,
}

impl Adam {
    fn new(layers: &[DenseLayer], lr: f64) -> Self {
        Adam {
            m: layers.iter().map(DenseLayer::zeros_like).collect(),
            v: layers.iter().map(DenseLayer::zeros_like).collect(),
            step: 0,
            lr,
        }
    }

    fn update(&mut self, params: &mut [DenseLayer], grads: &[DenseLayer]) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        let lr = self.lr;
        let apply = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPSILON);
        };
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            Zip::from(&mut p.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&g.weights)
                .for_each(|p, m, v, &g| apply(p, m, v, g));
            Zip::from(&mut p.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|p, m, v, &g| apply(p, m, v, g));
        }
    }
}

/// Patience counter over a maximized metric.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: Option<f64>,
    wait: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Waiting,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        EarlyStopping {
            patience,
            min_delta,
            best: None,
            wait: 0,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// An epoch improves only if it beats the best value so far by more than `min_delta`.
    pub fn update(&mut self, metric: f64) -> StopDecision {
        match self.best {
            Some(best) if metric <= best + self.min_delta => {
                self.wait += 1;
                if self.wait >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Waiting
                }
            }
            _ => {
                self.best = Some(metric);
                self.wait = 0;
                StopDecision::Improved
            }
        }
    }
}

/// Trains on `train_set`, scoring `val_set` accuracy after every epoch.
pub fn train(
    cfg: &FcnnConfig,
    train_set: &FeatureSet,
    val_set: &FeatureSet,
) -> Result<TrainOutcome, FcnnError> {
    if train_set.d() != cfg.input_dim {
        return Err(FcnnError::Dimension {
            expected: cfg.input_dim,
            found: train_set.d(),
        });
    }
    if val_set.d() != cfg.input_dim {
        return Err(FcnnError::Dimension {
            expected: cfg.input_dim,
            found: val_set.d(),
        });
    }
    let x = train_set.to_f64();
    let y = train_set.label_indices();
    let vx = val_set.to_f64();
    let vy = val_set.label_indices();
    let mut validator =
        |model: &FcnnModel, _epoch: usize| model.accuracy(vx.view(), &vy).unwrap_or(0.0);
    train_matrices(cfg, x.view(), &y, &mut validator)
}

/// Training loop over raw matrices with a caller-supplied validation score.
///
/// `validator` receives the model after each epoch (1-based) and returns the
/// validation accuracy that drives early stopping.
pub fn train_matrices(
    cfg: &FcnnConfig,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    validator: &mut dyn FnMut(&FcnnModel, usize) -> f64,
) -> Result<TrainOutcome, FcnnError> {
    let mut model = init_model(cfg)?;
    model.check_input(&x)?;
    model.check_labels(labels, x.nrows())?;
    let n = x.nrows();
    if n == 0 {
        return Err(FcnnError::Empty);
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(STREAM_SHUFFLE);
    let mut mask_rng = dropout_rng(cfg.seed);
    let mut adam = Adam::new(&model.layers, cfg.learning_rate);
    let mut stopper = EarlyStopping::new(cfg.patience, cfg.min_delta);
    let mut best_layers = model.layers.clone();
    let mut best_epoch = 0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut stop_epoch = cfg.max_epochs;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        for i in (1..n).rev() {
            let j = (shuffle_rng.next_u64() % (i as u64 + 1)) as usize;
            order.swap(i, j);
        }
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), batch);
            let yb: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let trace = model.trace(xb.view(), Some(&mut mask_rng));
            let loss = cross_entropy(&trace.logits, &yb);
            if !loss.is_finite() {
                return Err(FcnnError::NonFiniteLoss { epoch });
            }
            loss_sum += loss * batch.len() as f64;
            let grads = model.backward(&trace, &yb);
            adam.update(&mut model.layers, &grads);
        }
        if model.layers.iter().any(|l| {
            l.weights
                .iter()
                .chain(l.bias.iter())
                .any(|v| !v.is_finite())
        }) {
            return Err(FcnnError::NonFiniteLoss { epoch });
        }
        let val_accuracy = validator(&model, epoch);
        model.history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n as f64,
            val_accuracy,
        });
        log::debug!(
            "epoch {epoch}: loss {:.5} val_acc {:.4}",
            loss_sum / n as f64,
            val_accuracy
        );
        match stopper.update(val_accuracy) {
            StopDecision::Improved => {
                best_layers.clone_from(&model.layers);
                best_epoch = epoch;
            }
            StopDecision::Waiting => {}
            StopDecision::Stop => {
                stop_epoch = epoch;
                stopped_early = true;
                break;
            }
        }
    }

    let best_val_accuracy = stopper.best().unwrap_or(0.0);
    model.layers = best_layers;
    Ok(TrainOutcome {
        model,
        best_val_accuracy,
        best_epoch,
        stop_epoch,
        stopped_early,
    })
}

fn flatten(layers: &[DenseLayer]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
        .collect()
}

/// Largest relative disagreement between backprop gradients and central
/// differences (h = 1e-5) over every parameter of `model`.
pub fn gradient_check_model(
    model: &FcnnModel,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
) -> Result<f64, FcnnError> {
    const H: f64 = 1e-5;
    let (_, grads) = model.loss_and_gradients(x, labels)?;
    let analytic = flatten(&grads);
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    let mut idx = 0;
    for l in 0..probe.layers.len() {
        let count = probe.layers[l].weights.len() + probe.layers[l].bias.len();
        for p in 0..count {
            let numeric = {
                let original = *param_mut(&mut probe.layers[l], p);
                *param_mut(&mut probe.layers[l], p) = original + H;
                let up = probe.loss(x, labels)?;
                *param_mut(&mut probe.layers[l], p) = original - H;
                let down = probe.loss(x, labels)?;
                *param_mut(&mut probe.layers[l], p) = original;
                (up - down) / (2.0 * H)
            };
            let a = analytic[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
            idx += 1;
        }
    }
    Ok(worst)
}

fn param_mut(layer: &mut DenseLayer, p: usize) -> &mut f64 {
    let nw = layer.weights.len();
    if p < nw {
        let cols = layer.weights.ncols();
        &mut layer.weights[[p / cols, p % cols]]
    } else {
        &mut layer.bias[p - nw]
    }
}

/// Gradient check on a freshly initialized network. Dropout is forced off.
pub fn gradient_check(
    cfg: &FcnnConfig,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
) -> Result<f64, FcnnError> {
    let cfg = FcnnConfig {
        dropout_rate: 0.0,
        ..cfg.clone()
    };
    let model = init_model(&cfg)?;
    gradient_check_model(&model, x, labels)
}

/// FCNN layout (little-endian):
///
/// ```text
/// "FCNN" | version u32 | input_dim u32 | hidden_count u32 | widths u32[] | classes u32
///        | dropout f64 | lr f64 | batch u32 | max_epochs u32 | patience u32 | min_delta f64 | seed u64
///        | layer_count u32 | per layer: rows u32, cols u32, weights f64[rows*cols], bias f64[cols]
///        | history_len u32 | per epoch: epoch u32, train_loss f64, val_accuracy f64
/// ```
pub fn write_model<W: Write>(model: &FcnnModel, sink: W) -> io::Result<u64> {
    let cfg = &model.config;
    let mut w = CountingWriter::new(sink);
    w.bytes(&FCNN_MAGIC)?;
    w.u32(FCNN_VERSION)?;
    w.u32(cfg.input_dim as u32)?;
    w.u32(cfg.hidden.len() as u32)?;
    for &h in &cfg.hidden {
        w.u32(h as u32)?;
    }
    w.u32(cfg.classes as u32)?;
    w.f64(cfg.dropout_rate)?;
    w.f64(cfg.learning_rate)?;
    w.u32(cfg.batch_size as u32)?;
    w.u32(cfg.max_epochs as u32)?;
    w.u32(cfg.patience as u32)?;
    w.f64(cfg.min_delta)?;
    w.u64(cfg.seed)?;
    w.u32(model.layers.len() as u32)?;
    for l in &model.layers {
        w.u32(l.weights.nrows() as u32)?;
        w.u32(l.weights.ncols() as u32)?;
        for &v in &l.weights {
            w.f64(v)?;
        }
        for &v in &l.bias {
            w.f64(v)?;
        }
    }
    w.u32(model.history.len() as u32)?;
    for h in &model.history {
        w.u32(h.epoch as u32)?;
        w.f64(h.train_loss)?;
        w.f64(h.val_accuracy)?;
    }
    w.flush()?;
    Ok(w.written())
}

pub fn read_model<R: Read>(source: R) -> Result<FcnnModel, FcnnError> {
    let mut r = OffsetReader::new(source);
    let magic: [u8; 4] = r.array()?;
    if magic != FCNN_MAGIC {
        return Err(FcnnError::Format {
            offset: 0,
            reason: "bad magic".into(),
        });
    }
    let version = r.u32()?;
    if version != FCNN_VERSION {
        return Err(FcnnError::Format {
            offset: 4,
            reason: format!("unsupported version {version}"),
        });
    }
    let input_dim = r.u32()? as usize;
    let hidden_count = r.u32()? as usize;
    if hidden_count > 64 {
        return Err(FcnnError::Format {
            offset: 12,
            reason: format!("implausible hidden layer count {hidden_count}"),
        });
    }
    let hidden = (0..hidden_count)
        .map(|_| r.u32().map(|v| v as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let config = FcnnConfig {
        input_dim,
        hidden,
        classes: r.u32()? as usize,
        dropout_rate: r.f64()?,
        learning_rate: r.f64()?,
        batch_size: r.u32()? as usize,
        max_epochs: r.u32()? as usize,
        patience: r.u32()? as usize,
        min_delta: r.f64()?,
        seed: r.u64()?,
    };
    config.validate().map_err(|e| FcnnError::Format {
        offset: r.offset(),
        reason: e.to_string(),
    })?;
    let layer_offset = r.offset();
    let layer_count = r.u32()? as usize;
    let widths = config.widths();
    if layer_count != widths.len() - 1 {
        return Err(FcnnError::Format {
            offset: layer_offset,
            reason: format!(
                "{layer_count} layers, configuration needs {}",
                widths.len() - 1
            ),
        });
    }
    let mut layers = Vec::with_capacity(layer_count);
    for w in widths.windows(2) {
        let at = r.offset();
        let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
        if (rows, cols) != (w[0], w[1]) {
            return Err(FcnnError::Format {
                offset: at,
                reason: format!("layer is {rows}x{cols}, expected {}x{}", w[0], w[1]),
            });
        }
        let mut weights = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            weights.push(r.f64()?);
        }
        let mut bias = Vec::with_capacity(cols);
        for _ in 0..cols {
            bias.push(r.f64()?);
        }
        layers.push(DenseLayer {
            weights: Array2::from_shape_vec((rows, cols), weights).expect("length read"),
            bias: Array1::from(bias),
        });
    }
    let history_len = r.u32()? as usize;
    let mut history = Vec::with_capacity(history_len.min(1 << 16));
    for _ in 0..history_len {
        history.push(EpochRecord {
            epoch: r.u32()? as usize,
            train_loss: r.f64()?,
            val_accuracy: r.f64()?,
        });
    }
    let mut model = FcnnModel::from_parts(config, layers).map_err(|e| FcnnError::Format {
        offset: layer_offset,
        reason: e.to_string(),
    })?;
    model.history = history;
    Ok(model)
}

pub fn write_model_file(model: &FcnnModel, path: &Path) -> io::Result<u64> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn read_model_file(path: &Path) -> Result<FcnnModel, FcnnError> {
    read_model(BufReader::new(File::open(path)?))
}
