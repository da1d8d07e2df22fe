//! Two-stage training harness: optional masked-token fine-tuning of an
//! encoder, then a two-output logistic head trained with per-label binary
//! cross-entropy and best-F1 checkpoint selection.

mod adam;
mod artifact;
mod backend;
mod embedding;
mod head;
mod offline;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::Adam;
pub use artifact::{load_artifact, save_artifact, ModelArtifact, ARTIFACT_FORMAT_VERSION};
pub use backend::{Backend, BackendRef, BackendSpec, Capabilities, EncoderBackend};
pub use embedding::{EmbeddingEncoder, LmReport, EMBEDDING_BACKEND_NAME, EMBEDDING_BACKEND_VERSION};
pub use head::{train_classifier, validation_slice, ClassificationHead, RunReport};
pub use offline::{OfflineEncoder, OFFLINE_BACKEND_NAME, OFFLINE_BACKEND_VERSION};

use crate::dataset::{Label, LabelSet};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("language-model corpus is empty")]
    EmptyCorpus,
    #[error("backend {0} does not support language-model fine-tuning")]
    Unsupported(String),
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("training diverged (non-finite loss)")]
    Diverged,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("invalid artifact at {path}: {message}")]
    Artifact { path: String, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    LmFinetune,
    Classify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
}

/// Hyperparameters for both stages. Defaults: batch 8, Adam at 1e-4 for two
/// language-model epochs and 2e-5 for five classifier epochs, sequences of
/// 256 tokens, decision threshold 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub stage: Stage,
    pub batch_size: usize,
    pub lm_learning_rate: f64,
    pub clf_learning_rate: f64,
    pub lm_epochs: usize,
    pub clf_epochs: usize,
    pub max_sequence_length: usize,
    pub threshold: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            stage: Stage::Classify,
            batch_size: 8,
            lm_learning_rate: 1e-4,
            clf_learning_rate: 2e-5,
            lm_epochs: 2,
            clf_epochs: 5,
            max_sequence_length: 256,
            threshold: 0.5,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn lm_stage() -> Self {
        Self { stage: Stage::LmFinetune, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} not in (0, 1)", self.threshold));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.max_sequence_length == 0 {
            return bad("max_sequence_length must be positive".into());
        }
        for (name, lr) in [("lm_learning_rate", self.lm_learning_rate), ("clf_learning_rate", self.clf_learning_rate)] {
            if !(lr.is_finite() && lr > 0.0) {
                return bad(format!("{name} must be a positive number"));
            }
        }
        Ok(())
    }
}

/// Per-label probabilities and thresholded decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub probabilities: BTreeMap<String, f64>,
    pub decided: LabelSet,
    pub threshold_used: f64,
}

impl PredictionResult {
    pub fn from_probabilities(p: [f64; 2], threshold: f64) -> Self {
        Self {
            probabilities: Label::ALL.iter().map(|l| (l.as_str().to_owned(), p[l.index()])).collect(),
            decided: decide(p, threshold),
            threshold_used: threshold,
        }
    }

    pub fn decided_labels(&self) -> Vec<&'static str> {
        self.decided.labels().into_iter().map(Label::as_str).collect()
    }
}

/// A label is decided when its probability reaches the threshold.
pub fn decide(p: [f64; 2], threshold: f64) -> LabelSet {
    LabelSet::new(p[0] >= threshold, p[1] >= threshold)
}

/// Instantiate a backend. `pretrained:` paths are checkpoints written by
/// [`EmbeddingEncoder::to_bytes`].
pub fn build_backend(
    spec: &BackendSpec,
    cfg: &TrainingConfig,
    offline_dim: usize,
    offline_seed: u64,
) -> Result<Backend, PredictError> {
    Ok(match spec {
        BackendSpec::OfflineTest => {
            Backend::Offline(OfflineEncoder::new(offline_dim, offline_seed, cfg.max_sequence_length))
        }
        BackendSpec::EmbeddingInit => {
            Backend::Embedding(EmbeddingEncoder::init(2048, 32, cfg.seed, cfg.max_sequence_length, cfg.seed))
        }
        BackendSpec::Pretrained(path) => {
            let mut enc = load_encoder_checkpoint(path)?;
            enc.set_max_sequence_length(cfg.max_sequence_length);
            Backend::Embedding(enc)
        }
    })
}

pub fn load_encoder_checkpoint(path: &Path) -> Result<EmbeddingEncoder, PredictError> {
    let bytes = std::fs::read(path)?;
    EmbeddingEncoder::from_bytes(&bytes)
        .map_err(|message| PredictError::Artifact { path: path.display().to_string(), message })
}

/// Domain-adaptive masked-token fine-tuning. Returns the tuned backend (the
/// input is untouched) and a report with held-out loss before and after.
pub fn finetune_language_model(
    backend: &Backend,
    corpus: &[String],
    cfg: &TrainingConfig,
) -> Result<(Backend, LmReport), TrainError> {
    cfg.validate()?;
    if cfg.stage != Stage::LmFinetune {
        return Err(TrainError::InvalidConfig("stage must be lm_finetune".into()));
    }
    if !backend.capabilities().lm_finetune {
        return Err(TrainError::Unsupported(backend.name().to_owned()));
    }
    if corpus.iter().all(|l| l.trim().is_empty()) {
        return Err(TrainError::EmptyCorpus);
    }
    match backend {
        Backend::Embedding(enc) => {
            let mut tuned = enc.clone();
            let report = tuned.finetune(corpus, cfg)?;
            Ok((Backend::Embedding(tuned), report))
        }
        Backend::Offline(_) => Err(TrainError::Unsupported(backend.name().to_owned())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_training_recipe() {
        let c = TrainingConfig::default();
        assert_eq!(c.batch_size, 8);
        assert_eq!(c.lm_learning_rate, 1e-4);
        assert_eq!(c.clf_learning_rate, 2e-5);
        assert_eq!(c.lm_epochs, 2);
        assert_eq!(c.clf_epochs, 5);
        assert_eq!(c.max_sequence_length, 256);
        assert_eq!(c.threshold, 0.5);
        assert_eq!(c.optimizer, Optimizer::Adam);
    }

    #[test]
    fn threshold_bounds() {
        for t in [0.0, 1.0, -0.1, f64::NAN] {
            let c = TrainingConfig { threshold: t, ..Default::default() };
            assert!(c.validate().is_err(), "{t}");
        }
    }

    #[test]
    fn decisions() {
        let r = PredictionResult::from_probabilities([0.7, 0.4], 0.5);
        assert_eq!(r.decided, LabelSet::new(true, false));
        assert_eq!(r.decided_labels(), vec!["bioagressor"]);
        let r = PredictionResult::from_probabilities([0.4, 0.4], 0.5);
        assert!(r.decided_labels().is_empty());
        assert_eq!(decide([0.5, 0.49999], 0.5), LabelSet::new(true, false));
    }

    #[test]
    fn offline_backend_cannot_finetune() {
        let b = Backend::Offline(OfflineEncoder::default());
        let err = finetune_language_model(&b, &["a b c".into()], &TrainingConfig::lm_stage()).unwrap_err();
        assert!(matches!(err, TrainError::Unsupported(_)));
    }

    #[test]
    fn lm_zero_epochs_is_identity() {
        let b = Backend::Embedding(EmbeddingEncoder::init(128, 8, 1, 256, 1));
        let cfg = TrainingConfig { lm_epochs: 0, ..TrainingConfig::lm_stage() };
        let corpus: Vec<String> = vec!["les pucerons colonisent le colza".into(), "la rouille progresse".into()];
        let (tuned, report) = finetune_language_model(&b, &corpus, &cfg).unwrap();
        assert_eq!(tuned, b);
        assert_eq!(report.heldout_loss_before, report.heldout_loss_after);
    }

    #[test]
    fn lm_empty_corpus() {
        let b = Backend::Embedding(EmbeddingEncoder::init(128, 8, 1, 256, 1));
        let err = finetune_language_model(&b, &[], &TrainingConfig::lm_stage()).unwrap_err();
        assert!(matches!(err, TrainError::EmptyCorpus));
        let err = finetune_language_model(&b, &["  ".into()], &TrainingConfig::lm_stage()).unwrap_err();
        assert!(matches!(err, TrainError::EmptyCorpus));
    }

    #[test]
    fn lm_finetune_reduces_heldout_loss() {
        let b = Backend::Embedding(EmbeddingEncoder::init(256, 16, 7, 256, 7));
        let templates = [
            "les pucerons colonisent les parcelles de colza",
            "la rouille brune progresse sur le blé tendre",
            "les captures de pyrales augmentent dans le maïs",
            "le mildiou de la vigne reste sous surveillance",
        ];
        let corpus: Vec<String> = (0..80).map(|i| templates[i % templates.len()].to_string()).collect();
        let cfg = TrainingConfig::lm_stage();
        let (tuned, report) = finetune_language_model(&b, &corpus, &cfg).unwrap();
        assert_ne!(tuned, b);
        assert_eq!(report.per_epoch_train_loss.len(), 2);
        assert!(
            report.heldout_loss_after <= report.heldout_loss_before,
            "{} > {}",
            report.heldout_loss_after,
            report.heldout_loss_before
        );
    }
}
