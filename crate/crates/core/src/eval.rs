//! Classifier evaluation: accuracy, confusion matrix, exact t-SNE and the
//! silhouette score used to quantify cluster separation in the embedding.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::anomaly::{AnomalyClass, N_CLASSES};
use crate::error::{Error, Result};

fn check_pair(predictions: &[AnomalyClass], labels: &[AnomalyClass]) -> Result<()> {
    if predictions.len() != labels.len() {
        return Err(Error::domain(format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    if labels.is_empty() {
        return Err(Error::domain("nothing to evaluate"));
    }
    Ok(())
}

pub fn accuracy(predictions: &[AnomalyClass], labels: &[AnomalyClass]) -> Result<f64> {
    check_pair(predictions, labels)?;
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Rows are the true class, columns the predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..N_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// Recall of class `c`; `None` when the class has no true samples.
    pub fn recall(&self, c: usize) -> Option<f64> {
        let row: u64 = self.counts[c].iter().sum();
        (row > 0).then(|| self.counts[c][c] as f64 / row as f64)
    }

    pub fn precision(&self, c: usize) -> Option<f64> {
        let col: u64 = (0..N_CLASSES).map(|r| self.counts[r][c]).sum();
        (col > 0).then(|| self.counts[c][c] as f64 / col as f64)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "true\\predicted")?;
        for c in AnomalyClass::ALL {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
        for (r, row) in self.counts.iter().enumerate() {
            write!(w, "{}", AnomalyClass::ALL[r])?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn confusion(predictions: &[AnomalyClass], labels: &[AnomalyClass]) -> Result<ConfusionMatrix> {
    check_pair(predictions, labels)?;
    let mut m = ConfusionMatrix::default();
    for (p, l) in predictions.iter().zip(labels) {
        m.counts[l.code() as usize][p.code() as usize] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch_iter: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch_iter: 250,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            seed: 3,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self, n_points: usize) -> Result<()> {
        if n_points < 4 {
            return Err(Error::config("points", format!("t-SNE needs at least 4 points, got {n_points}")));
        }
        if !(self.perplexity > 1.0) {
            return Err(Error::config("perplexity", "must be > 1"));
        }
        let bound = (n_points as f64 - 1.0) / 3.0;
        if self.perplexity >= bound {
            return Err(Error::config(
                "perplexity",
                format!("{} is infeasible for {n_points} points (must be < {bound:.3})", self.perplexity),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be > 0"));
        }
        for (name, m) in [("initial_momentum", self.initial_momentum), ("final_momentum", self.final_momentum)] {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::config(name, "must lie in [0, 1)"));
            }
        }
        if !(self.early_exaggeration >= 1.0) {
            return Err(Error::config("early_exaggeration", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding2D {
    pub points: Vec<[f64; 2]>,
    pub initial_kl: f64,
    pub final_kl: f64,
}

fn squared_distances(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Conditional distributions `P(j|i)` with per-point Gaussian bandwidths
/// found by bisection on the entropy. Returns the row-major matrix and
/// the achieved perplexity of each row.
pub fn conditional_probabilities(points: &[Vec<f64>], perplexity: f64) -> (Vec<f64>, Vec<f64>) {
    const TOL: f64 = 1e-5;
    const MAX_STEPS: usize = 50;
    let n = points.len();
    let dist = squared_distances(points);
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    let mut achieved = vec![0.0; n];
    let mut row = vec![0.0; n];

    // entropy (nats) of row i at precision beta; fills `row`
    let eval = |i: usize, beta: f64, row: &mut [f64]| -> f64 {
        let di = &dist[i * n..(i + 1) * n];
        let min = (0..n).filter(|&j| j != i).map(|j| di[j]).fold(f64::INFINITY, f64::min);
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for j in 0..n {
            if j == i {
                row[j] = 0.0;
                continue;
            }
            // shifting by the nearest distance keeps exp() away from underflow
            let e = (-beta * (di[j] - min)).exp();
            row[j] = e;
            sum += e;
            weighted += (di[j] - min) * e;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
        sum.ln() + beta * weighted / sum
    };

    for i in 0..n {
        let mut beta = 1.0;
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut h = eval(i, beta, &mut row);
        for _ in 0..MAX_STEPS {
            let diff = h - target;
            if diff.abs() < TOL {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = if lo.is_finite() { (beta + lo) / 2.0 } else { beta / 2.0 };
            }
            h = eval(i, beta, &mut row);
        }
        achieved[i] = h.exp();
        p[i * n..(i + 1) * n].copy_from_slice(&row);
    }
    (p, achieved)
}

/// Symmetrized joint distribution `(P(j|i) + P(i|j)) / 2n`.
pub fn joint_probabilities(points: &[Vec<f64>], perplexity: f64) -> Vec<f64> {
    let n = points.len();
    let (cond, _) = conditional_probabilities(points, perplexity);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64);
        }
    }
    p
}

/// Student-t affinities of the embedding (unnormalized) and their sum.
fn student_t(y: &[[f64; 2]], num: &mut [f64]) -> f64 {
    let n = y.len();
    let mut sum = 0.0;
    for i in 0..n {
        num[i * n + i] = 0.0;
        for j in (i + 1)..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let q = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = q;
            num[j * n + i] = q;
            sum += 2.0 * q;
        }
    }
    sum
}

fn kl_divergence(p: &[f64], num: &[f64], sum_q: f64) -> f64 {
    p.iter()
        .zip(num)
        .filter(|(pij, _)| **pij > 0.0)
        .map(|(pij, q)| {
            let qij = (q / sum_q).max(1e-300);
            pij * (pij / qij).ln()
        })
        .sum::<f64>()
        .max(0.0)
}

/// Exact O(n^2) t-SNE to two dimensions.
pub fn tsne(points: &[Vec<f64>], config: &TsneConfig) -> Result<Embedding2D> {
    let n = points.len();
    config.validate(n)?;
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
        return Err(Error::domain("t-SNE input must be finite and of uniform dimension"));
    }
    let p = joint_probabilities(points, config.perplexity);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = Normal::new(0.0, 1e-4).expect("valid std");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [init.sample(&mut rng), init.sample(&mut rng)]).collect();
    let mut velocity = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut num = vec![0.0; n * n];

    let sum_q = student_t(&y, &mut num);
    let initial_kl = kl_divergence(&p, &num, sum_q);

    for iter in 0..config.iterations {
        let exaggeration = if iter < config.exaggeration_iters { config.early_exaggeration } else { 1.0 };
        let momentum = if iter < config.momentum_switch_iter { config.initial_momentum } else { config.final_momentum };
        let sum_q = student_t(&y, &mut num);
        if !(sum_q.is_finite() && sum_q > 0.0) {
            return Err(Error::Numeric { iteration: iter, reason: format!("affinity sum {sum_q}") });
        }
        for i in 0..n {
            let mut grad = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = num[i * n + j];
                let mult = (exaggeration * p[i * n + j] - q / sum_q) * q;
                grad[0] += mult * (y[i][0] - y[j][0]);
                grad[1] += mult * (y[i][1] - y[j][1]);
            }
            for d in 0..2 {
                let g = 4.0 * grad[d];
                // adaptive per-coordinate gains
                gains[i][d] =
                    if (g > 0.0) != (velocity[i][d] > 0.0) { gains[i][d] + 0.2 } else { (gains[i][d] * 0.8).max(0.01) };
                velocity[i][d] = momentum * velocity[i][d] - config.learning_rate * gains[i][d] * g;
            }
        }
        for (yi, vi) in y.iter_mut().zip(&velocity) {
            yi[0] += vi[0];
            yi[1] += vi[1];
        }
        let mean = [y.iter().map(|v| v[0]).sum::<f64>() / n as f64, y.iter().map(|v| v[1]).sum::<f64>() / n as f64];
        for yi in &mut y {
            yi[0] -= mean[0];
            yi[1] -= mean[1];
            if !(yi[0].is_finite() && yi[1].is_finite()) {
                return Err(Error::Numeric { iteration: iter, reason: "non-finite embedding coordinate".into() });
            }
        }
    }

    let sum_q = student_t(&y, &mut num);
    let final_kl = kl_divergence(&p, &num, sum_q);
    Ok(Embedding2D { points: y, initial_kl, final_kl })
}

/// Mean silhouette with Euclidean distance. Points in singleton clusters
/// score 0, as do points whose `a` and `b` are both 0.
pub fn silhouette(points: &[[f64; 2]], labels: &[u8]) -> Result<f64> {
    if points.len() != labels.len() {
        return Err(Error::domain("points and labels differ in length"));
    }
    let mut distinct: Vec<u8> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::domain("silhouette needs at least two distinct labels"));
    }
    let n = points.len();
    let dist = |i: usize, j: usize| (points[i][0] - points[j][0]).hypot(points[i][1] - points[j][1]);
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; distinct.len()];
        let mut counts = vec![0usize; distinct.len()];
        for j in 0..n {
            if i == j {
                continue;
            }
            let k = distinct.binary_search(&labels[j]).expect("label present");
            sums[k] += dist(i, j);
            counts[k] += 1;
        }
        let own = distinct.binary_search(&labels[i]).expect("label present");
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..distinct.len())
            .filter(|&k| k != own && counts[k] > 0)
            .map(|k| sums[k] / counts[k] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}
