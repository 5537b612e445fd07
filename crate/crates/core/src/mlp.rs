//! Fully connected classifier trained from scratch: ReLU hidden layers,
//! softmax output, cross-entropy loss, Adam, and a line-oriented text
//! model format.
//!
//! All arithmetic is f64. Results are bit-reproducible for a fixed seed on
//! platforms with IEEE-754 double semantics and no fused multiply-add
//! contraction (the default for Rust on every tier-1 target).

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anomaly::{AnomalyClass, N_CLASSES, N_FEATURES};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &str = "RANTWIN-MLP v1";

/// Dense layer; `weights` is row-major `n_out x n_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { n_in, n_out, weights: vec![0.0; n_in * n_out], biases: vec![0.0; n_out] }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            let mut acc = self.biases[o];
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            out.push(acc);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
}

/// Gradients share the model's shape.
pub type Gradients = MlpModel;

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub logits: [f64; N_CLASSES],
    pub probs: [f64; N_CLASSES],
}

fn full_dims(hidden: &[usize]) -> Vec<usize> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(N_FEATURES);
    dims.extend_from_slice(hidden);
    dims.push(N_CLASSES);
    dims
}

/// Stable softmax. Probabilities are floored at the smallest normal f64
/// so that every class keeps a strictly positive mass.
pub fn softmax(logits: &[f64; N_CLASSES]) -> [f64; N_CLASSES] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; N_CLASSES];
    let mut sum = 0.0;
    for (pi, l) in p.iter_mut().zip(logits) {
        *pi = (l - max).exp();
        sum += *pi;
    }
    for pi in &mut p {
        *pi = (*pi / sum).max(f64::MIN_POSITIVE);
    }
    p
}

/// `-ln softmax(logits)[label]`, computed relative to the label's logit so
/// a confident, correct prediction keeps full relative precision.
fn cross_entropy(logits: &[f64; N_CLASSES], label: usize) -> f64 {
    let ly = logits[label];
    let m = logits.iter().map(|l| l - ly).fold(0.0, f64::max);
    if m == 0.0 {
        let rest: f64 = logits.iter().enumerate().filter(|&(j, _)| j != label).map(|(_, l)| (l - ly).exp()).sum();
        rest.ln_1p()
    } else {
        m + logits.iter().map(|l| (l - ly - m).exp()).sum::<f64>().ln()
    }
}

/// Index of the largest probability; ties resolve to the lowest code.
pub fn argmax(probs: &[f64; N_CLASSES]) -> usize {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate().skip(1) {
        if *p > probs[best] {
            best = i;
        }
    }
    best
}

impl MlpModel {
    pub fn zeros(hidden: &[usize]) -> Result<Self> {
        if let Some(i) = hidden.iter().position(|&d| d == 0) {
            return Err(Error::config(format!("hidden_dims[{i}]"), "must be >= 1"));
        }
        let dims = full_dims(hidden);
        Ok(Self { layers: dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect() })
    }

    /// He-initialized weights (std `sqrt(2 / fan_in)`), zero biases.
    pub fn init(hidden: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(hidden)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut model.layers {
            let normal = Normal::new(0.0, (2.0 / layer.n_in as f64).sqrt())
                .map_err(|e| Error::config("hidden_dims", e.to_string()))?;
            for w in &mut layer.weights {
                *w = normal.sample(&mut rng);
            }
        }
        Ok(model)
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].n_in];
        dims.extend(self.layers.iter().map(|l| l.n_out));
        dims
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != N_FEATURES {
            return Err(Error::domain(format!("input has {} features, expected {N_FEATURES}", x.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("input contains a non-finite value"));
        }
        Ok(())
    }

    /// Activations of every layer; the last entry is the logits.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.n_out);
            layer.affine(&acts[l], &mut out);
            if l != last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        self.check_input(x)?;
        let acts = self.activations(x);
        let mut logits = [0.0; N_CLASSES];
        logits.copy_from_slice(acts.last().expect("output layer"));
        Ok(Forward { probs: softmax(&logits), logits })
    }

    pub fn predict(&self, x: &[f64]) -> Result<AnomalyClass> {
        let f = self.forward(x)?;
        Ok(AnomalyClass::ALL[argmax(&f.probs)])
    }

    /// Mean cross-entropy over the batch and its gradient by
    /// backpropagation.
    pub fn loss_and_grads(&self, batch: &[(&[f64], usize)]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::domain("empty batch"));
        }
        let mut grads = self.zeroed_like();
        let mut loss = 0.0;
        let last = self.layers.len() - 1;
        for &(x, label) in batch {
            if label >= N_CLASSES {
                return Err(Error::domain(format!("label code {label} outside 0..3")));
            }
            self.check_input(x)?;
            let acts = self.activations(x);
            let mut logits = [0.0; N_CLASSES];
            logits.copy_from_slice(&acts[last + 1]);
            loss += cross_entropy(&logits, label);
            let probs = softmax(&logits);
            let mut delta: Vec<f64> = probs.to_vec();
            delta[label] -= 1.0;
            for l in (0..=last).rev() {
                let layer = &self.layers[l];
                let input = &acts[l];
                let g = &mut grads.layers[l];
                for o in 0..layer.n_out {
                    g.biases[o] += delta[o];
                    let row = &mut g.weights[o * layer.n_in..(o + 1) * layer.n_in];
                    for (gw, xi) in row.iter_mut().zip(input) {
                        *gw += delta[o] * xi;
                    }
                }
                if l > 0 {
                    let mut prev = vec![0.0; layer.n_in];
                    for o in 0..layer.n_out {
                        let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += w * delta[o];
                        }
                    }
                    // ReLU mask of the hidden activation feeding this layer
                    for (p, a) in prev.iter_mut().zip(input) {
                        if *a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }
        let n = batch.len() as f64;
        for g in &mut grads.layers {
            g.weights.iter_mut().for_each(|v| *v /= n);
            g.biases.iter_mut().for_each(|v| *v /= n);
        }
        Ok((loss / n, grads))
    }

    pub fn loss(&self, batch: &[(&[f64], usize)]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::domain("empty batch"));
        }
        Ok(self.sample_losses(batch)?.iter().sum::<f64>() / batch.len() as f64)
    }

    fn sample_losses(&self, batch: &[(&[f64], usize)]) -> Result<Vec<f64>> {
        batch
            .iter()
            .map(|&(x, label)| {
                if label >= N_CLASSES {
                    return Err(Error::domain(format!("label code {label} outside 0..3")));
                }
                Ok(cross_entropy(&self.forward(x)?.logits, label))
            })
            .collect()
    }

    fn zeroed_like(&self) -> Self {
        Self { layers: self.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect() }
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    /// Largest absolute parameter difference between two same-shape models.
    pub fn max_abs_diff(&self, other: &MlpModel) -> f64 {
        self.params().zip(other.params()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(MODEL_MAGIC);
        s.push('\n');
        let dims: Vec<String> = self.dims().iter().map(|d| d.to_string()).collect();
        s.push_str(&dims.join(" "));
        s.push('\n');
        let line = |s: &mut String, vals: &[f64]| {
            for (i, v) in vals.iter().enumerate() {
                if i > 0 {
                    s.push(' ');
                }
                // shortest representation that parses back to the same bits
                write!(s, "{v:?}").expect("writing to a String");
            }
            s.push('\n');
        };
        for layer in &self.layers {
            for row in layer.weights.chunks(layer.n_in) {
                line(&mut s, row);
            }
            line(&mut s, &layer.biases);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| {
            lines
                .next()
                .map(|(i, l)| (i + 1, l))
                .ok_or_else(|| Error::format(what.to_string(), "unexpected end of file (truncated model)"))
        };
        let (_, magic) = next("magic")?;
        if magic.trim_end() != MODEL_MAGIC {
            return Err(Error::format("magic", format!("expected `{MODEL_MAGIC}`, found `{magic}`")));
        }
        let (_, dims_line) = next("dims")?;
        let dims: Vec<usize> = dims_line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::format("dims", format!("`{t}` is not a dimension"))))
            .collect::<Result<_>>()?;
        if dims.len() < 2 {
            return Err(Error::format("dims", "need at least input and output dimensions"));
        }
        if dims[0] != N_FEATURES {
            return Err(Error::format("dims", format!("input dimension {} != {N_FEATURES}", dims[0])));
        }
        if *dims.last().unwrap() != N_CLASSES {
            return Err(Error::format("dims", format!("output dimension {} != {N_CLASSES}", dims.last().unwrap())));
        }
        if dims.contains(&0) {
            return Err(Error::format("dims", "zero-width layer"));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (l, w) in dims.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let mut layer = Layer::zeros(n_in, n_out);
            for r in 0..n_out {
                let field = format!("layer {l} weight row {r}");
                let (lineno, text) = next(&field)?;
                let vals = parse_row(text, &field, lineno)?;
                if vals.len() != n_in {
                    return Err(Error::format(
                        field,
                        format!("dimension mismatch on line {lineno}: expected {n_in} values, found {}", vals.len()),
                    ));
                }
                layer.weights[r * n_in..(r + 1) * n_in].copy_from_slice(&vals);
            }
            let field = format!("layer {l} biases");
            let (lineno, text) = next(&field)?;
            let vals = parse_row(text, &field, lineno)?;
            if vals.len() != n_out {
                return Err(Error::format(
                    field,
                    format!("dimension mismatch on line {lineno}: expected {n_out} values, found {}", vals.len()),
                ));
            }
            layer.biases = vals;
            layers.push(layer);
        }
        if let Some((lineno, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(Error::format(
                "trailer",
                format!("unexpected content on line {}: `{extra}` (dimension mismatch)", lineno + 1),
            ));
        }
        Ok(Self { layers })
    }

    /// SHA-256 of the canonical text serialization, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn parse_row(text: &str, field: &str, lineno: usize) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|t| {
            let v: f64 = t
                .parse()
                .map_err(|_| Error::format(field.to_string(), format!("line {lineno}: `{t}` is not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::format(field.to_string(), format!("line {lineno}: non-finite parameter")))
            }
        })
        .collect()
}

/// Central finite-difference gradient of the mean loss, parameter by
/// parameter. Independent of backpropagation; used as a test oracle.
pub fn numerical_gradients(model: &MlpModel, batch: &[(&[f64], usize)], eps: f64) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::domain("empty batch"));
    }
    let n = batch.len() as f64;
    let mut grads = model.zeroed_like();
    let mut probe = model.clone();
    // differences are taken per sample before summing so that one large
    // loss does not swamp the precision of the others
    let central = |probe: &mut MlpModel, get: &dyn Fn(&mut MlpModel) -> &mut f64| -> Result<f64> {
        let orig = *get(probe);
        *get(probe) = orig + eps;
        let up = probe.sample_losses(batch)?;
        *get(probe) = orig - eps;
        let down = probe.sample_losses(batch)?;
        *get(probe) = orig;
        Ok(up.iter().zip(&down).map(|(u, d)| u - d).sum::<f64>() / (2.0 * eps * n))
    };
    for l in 0..model.layers.len() {
        for i in 0..model.layers[l].weights.len() {
            grads.layers[l].weights[i] = central(&mut probe, &|m| &mut m.layers[l].weights[i])?;
        }
        for i in 0..model.layers[l].biases.len() {
            grads.layers[l].biases[i] = central(&mut probe, &|m| &mut m.layers[l].biases[i])?;
        }
    }
    Ok(grads)
}

/// Max relative error between two gradient sets, with denominator
/// `max(|a|, |b|, 1e-8)`.
pub fn max_relative_error(a: &Gradients, b: &Gradients) -> f64 {
    a.params().zip(b.params()).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-8)).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden_dims: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![16, 16],
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("learning_rate", "must be > 0"));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::config(name, "must lie in (0, 1)"));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::config("adam_epsilon", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub epoch_loss: Vec<f64>,
    pub epoch_test_accuracy: Vec<f64>,
    pub model_digest: String,
}

impl TrainReport {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,test_accuracy")?;
        for (i, (l, a)) in self.epoch_loss.iter().zip(&self.epoch_test_accuracy).enumerate() {
            writeln!(w, "{},{l:?},{a:?}", i + 1)?;
        }
        Ok(())
    }
}

/// A training example: standardized features and a class code.
pub type Example = ([f64; N_FEATURES], usize);

fn batch_view(examples: &[Example]) -> Vec<(&[f64], usize)> {
    examples.iter().map(|(x, y)| (&x[..], *y)).collect()
}

pub fn accuracy_on(model: &MlpModel, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (x, y) in examples {
        if model.predict(x)?.code() as usize == *y {
            hits += 1;
        }
    }
    Ok(hits as f64 / examples.len() as f64)
}

/// Mini-batch Adam with a seeded shuffle every epoch.
pub fn train(
    model: MlpModel,
    train_set: &[Example],
    test_set: &[Example],
    config: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Training { epoch: 0, reason: "empty training set".into() });
    }
    let mut model = model;
    let all = batch_view(train_set);
    let initial_loss = model.loss(&all)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_params = model.n_params();
    let mut m = vec![0.0; n_params];
    let mut v = vec![0.0; n_params];
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut report = TrainReport {
        initial_loss,
        epoch_loss: Vec::with_capacity(config.epochs),
        epoch_test_accuracy: Vec::with_capacity(config.epochs),
        model_digest: String::new(),
    };

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&[f64], usize)> = chunk.iter().map(|&i| (&train_set[i].0[..], train_set[i].1)).collect();
            let (loss, grads) = model.loss_and_grads(&batch)?;
            if !loss.is_finite() {
                return Err(Error::Training { epoch, reason: format!("non-finite batch loss {loss}") });
            }
            step += 1;
            let bc1 = 1.0 - config.adam_beta1.powi(step);
            let bc2 = 1.0 - config.adam_beta2.powi(step);
            for (((p, g), mi), vi) in model.params_mut().zip(grads.params()).zip(&mut m).zip(&mut v) {
                *mi = config.adam_beta1 * *mi + (1.0 - config.adam_beta1) * g;
                *vi = config.adam_beta2 * *vi + (1.0 - config.adam_beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_epsilon);
            }
        }
        let loss = model.loss(&all)?;
        if !loss.is_finite() || !model.is_finite() {
            return Err(Error::Training { epoch, reason: "training diverged (non-finite loss)".into() });
        }
        report.epoch_loss.push(loss);
        report.epoch_test_accuracy.push(accuracy_on(&model, test_set)?);
    }
    let last = *report.epoch_loss.last().expect("at least one epoch");
    if !(last < initial_loss) {
        return Err(Error::Training {
            epoch: config.epochs,
            reason: format!("final loss {last} did not improve on initial loss {initial_loss}"),
        });
    }
    report.model_digest = model.digest();
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_inputs(n: usize, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        (0..n)
            .map(|i| {
                let mut x = [0.0; N_FEATURES];
                x.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
                (x, i % N_CLASSES)
            })
            .collect()
    }

    /// Smallest |pre-activation| over all hidden units and samples.
    fn relu_margin(m: &MlpModel, data: &[Example]) -> f64 {
        let mut margin = f64::INFINITY;
        for (x, _) in data {
            let mut a = x.to_vec();
            for layer in &m.layers[..m.layers.len() - 1] {
                let mut out = Vec::new();
                layer.affine(&a, &mut out);
                margin = out.iter().fold(margin, |acc, v| acc.min(v.abs()));
                a = out.iter().map(|v| v.max(0.0)).collect();
            }
        }
        margin
    }

    #[test]
    fn dims_and_param_counts() {
        let m = MlpModel::init(&[16, 16], 1).unwrap();
        assert_eq!(m.dims(), vec![8, 16, 16, 4]);
        assert_eq!(m.n_params(), 484);
        let lr = MlpModel::init(&[], 1).unwrap();
        assert_eq!(lr.dims(), vec![8, 4]);
        assert_eq!(lr.n_params(), 36);
        assert!(matches!(MlpModel::init(&[4, 0], 1), Err(Error::Config { .. })));
    }

    #[test]
    fn init_is_seeded_and_he_scaled() {
        assert_eq!(MlpModel::init(&[16, 16], 3).unwrap(), MlpModel::init(&[16, 16], 3).unwrap());
        assert_ne!(MlpModel::init(&[16, 16], 3).unwrap(), MlpModel::init(&[16, 16], 4).unwrap());
        let m = MlpModel::init(&[512], 9).unwrap();
        let w = &m.layers[1].weights;
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var - 2.0 / 512.0).abs() < 0.2 * 2.0 / 512.0);
        assert!(m.layers.iter().all(|l| l.biases.iter().all(|b| *b == 0.0)));
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = MlpModel::zeros(&[5]).unwrap();
        let f = m.forward(&[1.0; 8]).unwrap();
        assert_eq!(f.probs, [0.25; 4]);
        let batch = sample_inputs(6, 1);
        let (loss, _) = m.loss_and_grads(&batch_view(&batch)).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn extreme_logits_are_stable() {
        let p = softmax(&[1000.0, 0.0, 0.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| *v > 0.0 && v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let m = MlpModel::zeros(&[]).unwrap();
        assert!(m.forward(&[f64::NAN; 8]).is_err());
        assert!(m.forward(&[0.0; 7]).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.1, 0.7, 0.1, 0.1]), 1);
        assert_eq!(argmax(&[0.4, 0.1, 0.4, 0.1]), 0);
    }

    #[test]
    fn label_out_of_range() {
        let m = MlpModel::zeros(&[]).unwrap();
        let x = [0.0; 8];
        assert!(matches!(m.loss_and_grads(&[(&x[..], 4)]), Err(Error::Domain(_))));
        assert!(m.loss_and_grads(&[]).is_err());
    }

    #[test]
    fn single_sample_gradient_check() {
        let m = MlpModel::init(&[5], 11).unwrap();
        let data = sample_inputs(1, 12);
        let batch = batch_view(&data);
        let (_, analytic) = m.loss_and_grads(&batch).unwrap();
        let numeric = numerical_gradients(&m, &batch, 1e-5).unwrap();
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn duplicated_batch_same_mean() {
        let m = MlpModel::init(&[6, 5], 2).unwrap();
        let data = sample_inputs(5, 3);
        let doubled: Vec<Example> = data.iter().chain(data.iter()).cloned().collect();
        let (l1, g1) = m.loss_and_grads(&batch_view(&data)).unwrap();
        let (l2, g2) = m.loss_and_grads(&batch_view(&doubled)).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        assert!(g1.max_abs_diff(&g2) < 1e-12);
    }

    #[test]
    fn model_text_round_trip() {
        let m = MlpModel::init(&[16, 16], 5).unwrap();
        let back = MlpModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        for (a, b) in m.params().zip(back.params()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.digest(), m.digest());
        assert_eq!(m.digest().len(), 64);
    }

    #[test]
    fn model_format_errors() {
        let m = MlpModel::init(&[16], 5).unwrap();
        let text = m.to_text();
        let truncated: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        assert!(matches!(MlpModel::from_text(&truncated), Err(Error::Format { .. })));

        let bad_magic = text.replacen("RANTWIN-MLP v1", "RANTWIN-MLP v2", 1);
        match MlpModel::from_text(&bad_magic) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "magic"),
            other => panic!("{other:?}"),
        }

        // layer 0 declares 16 rows; keep only 10 of them
        let lines: Vec<&str> = text.lines().collect();
        let mut short: Vec<&str> = lines[..2].to_vec();
        short.extend(&lines[2..12]);
        short.extend(&lines[18..]);
        match MlpModel::from_text(&short.join("\n")) {
            Err(Error::Format { field, reason }) => {
                assert!(field.starts_with("layer 0"), "{field}");
                assert!(reason.contains("dimension mismatch"), "{reason}");
            }
            other => panic!("{other:?}"),
        }

        let wrong_input = text.replacen("8 16 4", "9 16 4", 1);
        assert!(MlpModel::from_text(&wrong_input).is_err());
    }

    #[test]
    fn frozen_training() {
        let data = sample_inputs(64, 21);
        let m0 = MlpModel::init(&[8], 4).unwrap();
        let cfg = TrainConfig { learning_rate: 1e-12, epochs: 1, ..Default::default() };
        match train(m0.clone(), &data, &data, &cfg) {
            Ok((m1, _)) => assert!(m1.max_abs_diff(&m0) < 1e-6),
            // a loss that cannot measurably move is also acceptable here
            Err(Error::Training { .. }) => {}
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn training_learns_and_is_deterministic() {
        // linearly separable toy task: class = argmax of first four inputs
        let mut data = sample_inputs(400, 31);
        for (x, y) in &mut data {
            *y = (0..4).max_by(|&a, &b| x[a].total_cmp(&x[b])).unwrap();
        }
        let cfg = TrainConfig { epochs: 40, learning_rate: 1e-2, ..Default::default() };
        let (m1, r1) = train(MlpModel::init(&[16, 16], 1).unwrap(), &data[..300], &data[300..], &cfg).unwrap();
        let (m2, r2) = train(MlpModel::init(&[16, 16], 1).unwrap(), &data[..300], &data[300..], &cfg).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(m1, m2);
        assert!(r1.epoch_loss.last().unwrap() < &r1.initial_loss);
        assert!(*r1.epoch_test_accuracy.last().unwrap() > 0.8);
        assert!(r1.epoch_test_accuracy.iter().all(|a| (0.0..=1.0).contains(a)));
    }

    #[test]
    fn bad_train_config() {
        let data = sample_inputs(8, 1);
        let m = MlpModel::zeros(&[]).unwrap();
        for cfg in [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { adam_beta1: 1.0, ..Default::default() },
        ] {
            assert!(matches!(train(m.clone(), &data, &data, &cfg), Err(Error::Config { .. })));
        }
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let mut data = sample_inputs(32, 1);
        data.iter_mut().for_each(|(x, _)| x.iter_mut().for_each(|v| *v *= 1e300));
        let cfg = TrainConfig { learning_rate: 1e10, epochs: 3, ..Default::default() };
        match train(MlpModel::init(&[4], 1).unwrap(), &data, &data, &cfg) {
            Err(Error::Training { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected training error, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn probabilities_normalized(x in proptest::array::uniform8(-1e4f64..1e4), seed in 0u64..50) {
            let m = MlpModel::init(&[8, 8], seed).unwrap();
            let f = m.forward(&x).unwrap();
            prop_assert!((f.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(f.probs.iter().all(|p| *p > 0.0));
        }

        #[test]
        fn extreme_logit_softmax(l in proptest::array::uniform4(-1e4f64..1e4)) {
            let p = softmax(&l);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn predict_matches_forward_argmax(x in proptest::array::uniform8(-5.0f64..5.0), seed in 0u64..1000) {
            let m = MlpModel::init(&[6], seed).unwrap();
            let f = m.forward(&x).unwrap();
            prop_assert_eq!(m.predict(&x).unwrap().code() as usize, argmax(&f.probs));
        }

        #[test]
        fn batch_permutation_invariance(seed in 0u64..200, rot in 1usize..7) {
            let m = MlpModel::init(&[5], seed).unwrap();
            let data = sample_inputs(7, seed + 1);
            let mut shuffled = data.clone();
            shuffled.rotate_left(rot);
            let (l1, g1) = m.loss_and_grads(&batch_view(&data)).unwrap();
            let (l2, g2) = m.loss_and_grads(&batch_view(&shuffled)).unwrap();
            prop_assert!((l1 - l2).abs() <= 1e-12);
            prop_assert!(g1.max_abs_diff(&g2) <= 1e-12);
        }

        #[test]
        fn random_gradient_checks(seed in 0u64..10_000, n in 1usize..6) {
            let m = MlpModel::init(&[5], seed).unwrap();
            let data = sample_inputs(n, seed ^ 0xabc);
            // a unit sitting on the ReLU kink has no derivative to check
            prop_assume!(relu_margin(&m, &data) > 1e-3);
            let batch = batch_view(&data);
            let (_, analytic) = m.loss_and_grads(&batch).unwrap();
            let numeric = numerical_gradients(&m, &batch, 1e-5).unwrap();
            // components below the finite-difference resolution (about
            // 1e-16 * loss / eps) are compared absolutely
            for (a, b) in analytic.params().zip(numeric.params()) {
                let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-8);
                prop_assert!(rel < 1e-4 || (a - b).abs() < 1e-9, "{} vs {}", a, b);
            }
        }
    }
}
