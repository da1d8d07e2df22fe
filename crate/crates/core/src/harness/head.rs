use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::artifact::ModelArtifact;
use super::backend::{Backend, EncoderBackend};
use super::{Stage, TrainError, TrainingConfig};
use crate::dataset::{DatasetSplit, Label, LabelSet};
use crate::metrics::{evaluate_predictions, AucAveraging};

/// Two independent logistic outputs over a frozen encoder vector. Inputs are
/// standardized with per-feature statistics fixed before training.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationHead {
    dim: usize,
    mean: Vec<f64>,
    inv_std: Vec<f64>,
    /// Row-major `2 x dim`, rows in [`Label::ALL`] order.
    weights: Vec<f64>,
    bias: [f64; 2],
}

impl ClassificationHead {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, mean: vec![0.0; dim], inv_std: vec![1.0; dim], weights: vec![0.0; 2 * dim], bias: [0.0; 2] }
    }

    /// Zero weights with standardization statistics taken from `xs`. Constant
    /// features keep unit scale.
    pub fn standardized(dim: usize, xs: &[Vec<f64>]) -> Self {
        let mut head = Self::zeros(dim);
        if xs.is_empty() {
            return head;
        }
        let n = xs.len() as f64;
        for x in xs {
            head.mean.iter_mut().zip(x).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; dim];
        for x in xs {
            var.iter_mut().zip(x.iter().zip(&head.mean)).for_each(|(s, (v, m))| *s += (v - m).powi(2) / n);
        }
        head.inv_std = var.iter().map(|&s| if s > 1e-24 { 1.0 / s.sqrt() } else { 1.0 }).collect();
        head
    }

    pub fn from_parts(
        dim: usize,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
        weights: Vec<f64>,
        bias: [f64; 2],
    ) -> Result<Self, String> {
        if mean.len() != dim || inv_std.len() != dim || weights.len() != 2 * dim {
            return Err(format!(
                "head parts have lengths {}/{}/{}, expected {dim}/{dim}/{}",
                mean.len(),
                inv_std.len(),
                weights.len(),
                2 * dim
            ));
        }
        Ok(Self { dim, mean, inv_std, weights, bias })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn inv_std(&self) -> &[f64] {
        &self.inv_std
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.inv_std).map(|((v, m), s)| (v - m) * s).collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> [f64; 2] {
        self.bias
    }

    pub fn logits(&self, x: &[f64]) -> [f64; 2] {
        self.logits_standardized(&self.standardize(x))
    }

    fn logits_standardized(&self, x: &[f64]) -> [f64; 2] {
        let mut z = self.bias;
        for (k, zk) in z.iter_mut().enumerate() {
            let row = &self.weights[k * self.dim..(k + 1) * self.dim];
            *zk += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        z
    }

    pub fn probabilities(&self, x: &[f64]) -> [f64; 2] {
        self.logits(x).map(sigmoid)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy from a logit, stable for large |z|.
fn bce_with_logit(z: f64, y: bool) -> f64 {
    let softplus = |t: f64| t.max(0.0) + (-t.abs()).exp().ln_1p();
    if y {
        softplus(-z)
    } else {
        softplus(z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub stage: Stage,
    pub backend: String,
    pub backend_version: String,
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub threshold: f64,
    pub n_fit_examples: usize,
    pub n_validation_examples: usize,
    pub validation_docs: Vec<String>,
    pub per_epoch_train_loss: Vec<f64>,
    /// Weighted F1 on the validation slice after each epoch.
    pub per_epoch_val_f1: Vec<f64>,
    /// Weighted F1 of the zero-initialized head.
    pub initial_val_f1: f64,
    pub best_epoch: usize,
    pub best_f1: f64,
}

/// Validation documents: the last 10% (at least one) of the shuffled train
/// documents. With a single train document it doubles as the fit set.
pub fn validation_slice(train_docs: &[String]) -> (Vec<String>, Vec<String>) {
    let n = train_docs.len();
    if n <= 1 {
        return (train_docs.to_vec(), train_docs.to_vec());
    }
    let n_val = ((n as f64 * 0.1).round() as usize).clamp(1, n - 1);
    let (fit, val) = train_docs.split_at(n - n_val);
    (fit.to_vec(), val.to_vec())
}

fn weighted_f1(head: &ClassificationHead, xs: &[Vec<f64>], ys: &[LabelSet], threshold: f64) -> f64 {
    let probs: Vec<[f64; 2]> = xs.iter().map(|x| head.probabilities(x)).collect();
    evaluate_predictions(&probs, ys, threshold, AucAveraging::SupportWeighted)
        .map(|r| r.weighted.f1)
        .unwrap_or(0.0)
}

/// Train the head on the encoder's frozen vectors and keep the epoch with the
/// best validation weighted F1 (earliest on ties).
pub fn train_classifier(
    backend: &Backend,
    split: &DatasetSplit,
    cfg: &TrainingConfig,
) -> Result<(ModelArtifact, RunReport), TrainError> {
    cfg.validate()?;
    if cfg.stage != Stage::Classify {
        return Err(TrainError::InvalidConfig("stage must be classify".into()));
    }
    if split.train.is_empty() {
        return Err(TrainError::DegenerateLabels("training side is empty".into()));
    }
    for label in Label::ALL {
        if !split.train.iter().any(|ex| ex.labels.get(label)) {
            return Err(TrainError::DegenerateLabels(format!("no {} positives in training data", label.as_str())));
        }
    }

    let mut train_docs = split.train_docs.clone();
    if train_docs.is_empty() {
        let mut seen = BTreeSet::new();
        train_docs = split.train.iter().filter(|ex| seen.insert(&ex.doc_id)).map(|ex| ex.doc_id.clone()).collect();
    }
    let (fit_docs, val_docs) = validation_slice(&train_docs);
    let fit_set: BTreeSet<&str> = fit_docs.iter().map(String::as_str).collect();
    let val_set: BTreeSet<&str> = val_docs.iter().map(String::as_str).collect();

    let encoded: Vec<Vec<f64>> = split.train.par_iter().map(|ex| backend.encode(&ex.text)).collect();
    let (mut fit_x, mut fit_y, mut val_x, mut val_y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (ex, x) in split.train.iter().zip(encoded) {
        if val_set.contains(ex.doc_id.as_str()) {
            val_x.push(x.clone());
            val_y.push(ex.labels);
        }
        if fit_set.contains(ex.doc_id.as_str()) {
            fit_x.push(x);
            fit_y.push(ex.labels);
        }
    }

    let dim = backend.dim();
    let mut head = ClassificationHead::standardized(dim, &fit_x);
    let fit_z: Vec<Vec<f64>> = fit_x.iter().map(|x| head.standardize(x)).collect();
    let initial_val_f1 = weighted_f1(&head, &val_x, &val_y, cfg.threshold);
    let mut best = (0usize, initial_val_f1, head.clone());
    let mut opt = Adam::new(cfg.clf_learning_rate, &[2 * dim, 2]);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..fit_x.len()).collect();
    let (mut losses, mut val_f1s) = (Vec::new(), Vec::new());
    let mut gw = vec![0.0; 2 * dim];

    for epoch in 1..=cfg.clf_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            gw.iter_mut().for_each(|g| *g = 0.0);
            let mut gb = [0.0; 2];
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let x = &fit_z[i];
                let z = head.logits_standardized(x);
                for label in Label::ALL {
                    let k = label.index();
                    let y = fit_y[i].get(label);
                    epoch_loss += bce_with_logit(z[k], y);
                    let d = (sigmoid(z[k]) - if y { 1.0 } else { 0.0 }) * scale;
                    gb[k] += d;
                    gw[k * dim..(k + 1) * dim].iter_mut().zip(x).for_each(|(g, v)| *g += d * v);
                }
            }
            let mut bias = head.bias.to_vec();
            opt.step(&mut [&mut head.weights, &mut bias], &[&gw, &gb]);
            head.bias = [bias[0], bias[1]];
        }
        let mean_loss = epoch_loss / (2 * fit_x.len().max(1)) as f64;
        if !mean_loss.is_finite() || head.weights.iter().any(|w| !w.is_finite()) {
            return Err(TrainError::Diverged);
        }
        losses.push(mean_loss);
        let f1 = weighted_f1(&head, &val_x, &val_y, cfg.threshold);
        val_f1s.push(f1);
        if epoch == 1 || f1 > best.1 {
            best = (epoch, f1, head.clone());
        }
    }

    let (best_epoch, best_f1, best_head) = best;
    let report = RunReport {
        stage: Stage::Classify,
        backend: backend.name().to_owned(),
        backend_version: backend.version().to_owned(),
        seed: cfg.seed,
        epochs: cfg.clf_epochs,
        learning_rate: cfg.clf_learning_rate,
        batch_size: cfg.batch_size,
        threshold: cfg.threshold,
        n_fit_examples: fit_x.len(),
        n_validation_examples: val_x.len(),
        validation_docs: val_docs,
        per_epoch_train_loss: losses,
        per_epoch_val_f1: val_f1s,
        initial_val_f1,
        best_epoch,
        best_f1,
    };
    let artifact = ModelArtifact::new(backend.clone(), best_head, cfg.clone(), best_epoch, best_f1);
    Ok((artifact, report))
}
