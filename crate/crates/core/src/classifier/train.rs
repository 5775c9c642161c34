//! Loss, gradients, Adam training and prediction.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::Network;
use super::params::{init, ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::signal::{EpochSet, Label};

/// Logits `[batch × classes]` in inference mode.
pub fn forward(params: &ModelParams, windows: &[&Array2<f64>]) -> Result<Array2<f64>> {
    let net = Network::new(params)?;
    let mut out = Array2::zeros((windows.len(), params.config().classes));
    for (mut row, w) in out.rows_mut().into_iter().zip(windows) {
        row.assign(&net.forward(w, None)?.logits);
    }
    Ok(out)
}

fn log_softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    logits.mapv(|v| v - lse)
}

pub(crate) struct BatchOutcome {
    /// Σ wᵢ·CEᵢ over the batch.
    pub weighted_loss: f64,
    pub weight: f64,
    pub correct: usize,
}

/// Accumulates the gradient of `Σ wᵢ·CEᵢ / Σ wᵢ` into `grad`.
pub(crate) fn batch_gradient(
    params: &ModelParams,
    windows: &[&Array2<f64>],
    labels: &[usize],
    class_weights: &[f64],
    mut rng: Option<&mut ChaCha8Rng>,
    grad: &mut ModelParams,
) -> Result<BatchOutcome> {
    if windows.len() != labels.len() || windows.is_empty() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} labels", windows.len()),
            got: format!("{} labels", labels.len()),
        });
    }
    let classes = params.config().classes;
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::invalid(format!("label index {bad} exceeds {classes} classes")));
    }
    let weight: f64 = labels.iter().map(|&y| class_weights[y]).sum();
    let mut net = Network::new(params)?;
    let mut weighted_loss = 0.0;
    let mut correct = 0;
    for (w, &y) in windows.iter().zip(labels) {
        let sample = net.forward(w, rng.as_deref_mut())?;
        let logp = log_softmax(&sample.logits);
        let wi = class_weights[y];
        weighted_loss -= wi * logp[y];
        let predicted = argmax(sample.logits.iter().copied());
        correct += usize::from(predicted == y);
        let mut d = logp.mapv(f64::exp) * (wi / weight);
        d[y] -= wi / weight;
        net.backward(&sample, &d, grad.values_mut());
    }
    net.finish(grad.values_mut());
    if !weighted_loss.is_finite() {
        let block = params
            .first_non_finite_block()
            .or_else(|| grad.first_non_finite_block())
            .unwrap_or("head")
            .to_string();
        return Err(Error::NonFiniteLoss { block });
    }
    Ok(BatchOutcome {
        weighted_loss,
        weight,
        correct,
    })
}

fn argmax(it: impl Iterator<Item = f64>) -> usize {
    it.enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, v)| if v > best.1 { (i, v) } else { best },
        )
        .0
}

/// Mean softmax cross-entropy of the batch and its gradient, in inference mode.
/// The gradient shares the parameter layout, so its blocks carry the same names.
pub fn loss_and_grad(params: &ModelParams, windows: &[&Array2<f64>], labels: &[Label]) -> Result<(f64, ModelParams)> {
    let idx: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    let weights = vec![1.0; params.config().classes];
    let mut grad = ModelParams::zeros_like(params);
    let out = batch_gradient(params, windows, &idx, &weights, None, &mut grad)?;
    Ok((out.weighted_loss / out.weight, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Weight each class by `N / (classes · count)` in the loss.
    pub class_weighting: bool,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            class_weighting: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
    pub epoch_accuracy: Vec<f64>,
    pub epoch_wall_s: Vec<f64>,
    pub class_weights: Vec<f64>,
    pub checksum: String,
}

/// Wall times differ between otherwise identical runs and are ignored.
impl PartialEq for TrainReport {
    fn eq(&self, other: &Self) -> bool {
        self.epoch_loss == other.epoch_loss
            && self.epoch_accuracy == other.epoch_accuracy
            && self.class_weights == other.class_weights
            && self.checksum == other.checksum
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

fn check_set(config: &ModelConfig, set: &EpochSet) -> Result<()> {
    if let Some(e) = set
        .epochs
        .iter()
        .find(|e| e.window.dim() != (config.window_len, config.channels))
    {
        return Err(Error::ShapeMismatch {
            expected: format!("{} × {} windows", config.window_len, config.channels),
            got: format!("{} × {} window", e.window.nrows(), e.window.ncols()),
        });
    }
    Ok(())
}

/// Inverse-frequency weights `N / (present classes · count)`; absent classes get 0.
pub fn class_weights(labels: &[usize], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for &y in labels {
        counts[y] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    counts
        .iter()
        .map(|&c| {
            if c == 0 {
                0.0
            } else {
                labels.len() as f64 / (present * c as f64)
            }
        })
        .collect()
}

/// Trains from a fresh initialization for a fixed number of epochs.
pub fn train(config: &ModelConfig, set: &EpochSet, hyper: &TrainHyper) -> Result<(ModelParams, TrainReport)> {
    let params = init(config)?;
    train_from(params, set, hyper)
}

/// Continues training from `params`.
pub fn train_from(mut params: ModelParams, set: &EpochSet, hyper: &TrainHyper) -> Result<(ModelParams, TrainReport)> {
    let config = params.config().clone();
    check_set(&config, set)?;
    if hyper.batch_size == 0 || !(hyper.lr >= 0.0) {
        return Err(Error::invalid("batch_size must be positive and lr non-negative"));
    }
    let labels: Vec<usize> = set.labels()?.iter().map(|l| l.index()).collect();
    let distinct = {
        let mut seen = vec![false; config.classes];
        labels.iter().for_each(|&y| seen[y.min(config.classes - 1)] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(Error::SingleClass(format!(
            "training set of {} epochs holds one class",
            labels.len()
        )));
    }
    let weights = if hyper.class_weighting {
        class_weights(&labels, config.classes)
    } else {
        vec![1.0; config.classes]
    };

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut adam = Adam::new(params.len());
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut report = TrainReport {
        epoch_loss: Vec::with_capacity(hyper.epochs),
        epoch_accuracy: Vec::with_capacity(hyper.epochs),
        epoch_wall_s: Vec::with_capacity(hyper.epochs),
        class_weights: weights.clone(),
        checksum: String::new(),
    };
    for epoch in 0..hyper.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let (mut loss, mut weight, mut correct) = (0.0, 0.0, 0);
        for chunk in order.chunks(hyper.batch_size) {
            let windows: Vec<&Array2<f64>> = chunk.iter().map(|&i| &set.epochs[i].window).collect();
            let ys: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let mut grad = ModelParams::zeros_like(&params);
            let out = batch_gradient(&params, &windows, &ys, &weights, Some(&mut rng), &mut grad)?;
            loss += out.weighted_loss;
            weight += out.weight;
            correct += out.correct;
            adam.update(params.values_mut(), grad.values(), hyper.lr);
        }
        let epoch_loss = loss / weight;
        log::debug!(
            "epoch {epoch}: loss {epoch_loss:.5}, accuracy {:.4}",
            correct as f64 / set.len() as f64
        );
        report.epoch_loss.push(epoch_loss);
        report.epoch_accuracy.push(correct as f64 / set.len() as f64);
        report.epoch_wall_s.push(started.elapsed().as_secs_f64());
        if !params.is_finite() {
            let block = params.first_non_finite_block().unwrap_or("head").to_string();
            return Err(Error::NonFiniteLoss { block });
        }
    }
    report.checksum = params.checksum();
    Ok((params, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    /// `None` for class indices beyond the binary label set.
    pub fn label(&self) -> Option<Label> {
        Label::from_index(self.class)
    }
}

/// Argmax class and softmax probabilities for every epoch, in order.
pub fn predict(params: &ModelParams, set: &EpochSet) -> Result<Vec<Prediction>> {
    check_set(params.config(), set)?;
    let net = Network::new(params)?;
    set.epochs
        .iter()
        .map(|e| {
            let logits = net.forward(&e.window, None)?.logits;
            let probabilities = log_softmax(&logits).mapv(f64::exp).to_vec();
            Ok(Prediction {
                class: argmax(probabilities.iter().copied()),
                probabilities,
            })
        })
        .collect()
}
