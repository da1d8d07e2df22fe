use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::backend::{Backend, BackendRef, EncoderBackend};
use super::embedding::{EmbeddingEncoder, EMBEDDING_BACKEND_VERSION};
use super::head::ClassificationHead;
use super::offline::{OfflineEncoder, OFFLINE_BACKEND_VERSION};
use super::{PredictError, PredictionResult, TrainingConfig};
use crate::dataset::Label;

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;
const HEAD_MAGIC: &[u8; 8] = b"PHYHEAD1";
const HEAD_FILE: &str = "head.bin";
const BACKEND_FILE: &str = "backend.bin";
const MANIFEST_FILE: &str = "artifact.json";

/// A trained classifier: encoder, head and the configuration it was trained
/// with. Immutable once built; prediction takes `&self`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    backend: Backend,
    head: ClassificationHead,
    pub config: TrainingConfig,
    pub best_epoch: usize,
    pub best_f1: f64,
    pub label_order: Vec<String>,
}

impl ModelArtifact {
    pub fn new(backend: Backend, head: ClassificationHead, config: TrainingConfig, best_epoch: usize, best_f1: f64) -> Self {
        Self {
            backend,
            head,
            config,
            best_epoch,
            best_f1,
            label_order: Label::ALL.iter().map(|l| l.as_str().to_owned()).collect(),
        }
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn head(&self) -> &ClassificationHead {
        &self.head
    }

    /// Probabilities in [`Label::ALL`] order.
    pub fn probabilities(&self, text: &str) -> [f64; 2] {
        self.head.probabilities(&self.backend.encode(text))
    }

    pub fn predict(&self, text: &str) -> PredictionResult {
        self.predict_with(text, self.config.threshold)
    }

    pub fn predict_with(&self, text: &str, threshold: f64) -> PredictionResult {
        PredictionResult::from_probabilities(self.probabilities(text), threshold)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct HeadRef {
    file: String,
    sha256: String,
    dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    backend_name: String,
    backend: BackendRef,
    head: HeadRef,
    label_order: Vec<String>,
    best_epoch: usize,
    best_f1: f64,
    config: TrainingConfig,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn head_bytes(head: &ClassificationHead) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * (4 * head.dim() + 2));
    out.extend_from_slice(HEAD_MAGIC);
    out.extend_from_slice(&ARTIFACT_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&2u32.to_le_bytes());
    out.extend_from_slice(&(head.dim() as u64).to_le_bytes());
    let bias = head.bias();
    let values = head.mean().iter().chain(head.inv_std()).chain(head.weights()).chain(bias.iter());
    for w in values {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

fn head_from_bytes(bytes: &[u8]) -> Result<ClassificationHead, String> {
    if bytes.len() < 24 || &bytes[..8] != HEAD_MAGIC {
        return Err("head file is truncated or has a bad magic".into());
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != ARTIFACT_FORMAT_VERSION {
        return Err(format!("head format version {version}, expected {ARTIFACT_FORMAT_VERSION}"));
    }
    let n_labels = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if n_labels != 2 {
        return Err(format!("head has {n_labels} outputs, expected 2"));
    }
    let dim = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let body = &bytes[24..];
    let expected = dim.checked_mul(4).and_then(|n| n.checked_add(2)).and_then(|n| n.checked_mul(8));
    if expected != Some(body.len()) {
        return Err(format!("head body has {} bytes, expected 8 * (4 * {dim} + 2)", body.len()));
    }
    let values: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let (mean, rest) = values.split_at(dim);
    let (inv_std, rest) = rest.split_at(dim);
    let (weights, bias) = rest.split_at(2 * dim);
    ClassificationHead::from_parts(dim, mean.to_vec(), inv_std.to_vec(), weights.to_vec(), [bias[0], bias[1]])
}

/// Write the artifact directory: `artifact.json`, `head.bin` and, for the
/// embedding backend, `backend.bin`. Identical artifacts give identical files.
pub fn save_artifact(artifact: &ModelArtifact, dir: &Path) -> Result<(), PredictError> {
    fs::create_dir_all(dir)?;
    let head = head_bytes(&artifact.head);
    let backend = match &artifact.backend {
        Backend::Offline(enc) => BackendRef::OfflineTest {
            version: OFFLINE_BACKEND_VERSION.to_owned(),
            dim: enc.dim(),
            seed: enc.seed(),
            max_sequence_length: enc.max_sequence_length(),
        },
        Backend::Embedding(enc) => {
            let bytes = enc.to_bytes();
            fs::write(dir.join(BACKEND_FILE), &bytes)?;
            BackendRef::Embedding {
                version: EMBEDDING_BACKEND_VERSION.to_owned(),
                file: BACKEND_FILE.to_owned(),
                sha256: sha256_hex(&bytes),
                dim: enc.dim(),
                buckets: enc.buckets(),
            }
        }
    };
    let manifest = Manifest {
        format_version: ARTIFACT_FORMAT_VERSION,
        backend_name: artifact.backend.name().to_owned(),
        backend,
        head: HeadRef { file: HEAD_FILE.to_owned(), sha256: sha256_hex(&head), dim: artifact.head.dim() },
        label_order: artifact.label_order.clone(),
        best_epoch: artifact.best_epoch,
        best_f1: artifact.best_f1,
        config: artifact.config.clone(),
    };
    fs::write(dir.join(HEAD_FILE), &head)?;
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(())
}

pub fn load_artifact(dir: &Path) -> Result<ModelArtifact, PredictError> {
    let bad = |message: String| PredictError::Artifact { path: dir.display().to_string(), message };
    let read = |name: &str| fs::read(dir.join(name)).map_err(|e| bad(format!("{name}: {e}")));

    let manifest: Manifest =
        serde_json::from_slice(&read(MANIFEST_FILE)?).map_err(|e| bad(format!("{MANIFEST_FILE}: {e}")))?;
    if manifest.format_version != ARTIFACT_FORMAT_VERSION {
        return Err(bad(format!(
            "format version {}, expected {ARTIFACT_FORMAT_VERSION}",
            manifest.format_version
        )));
    }
    let expected_order: Vec<String> = Label::ALL.iter().map(|l| l.as_str().to_owned()).collect();
    if manifest.label_order != expected_order {
        return Err(bad(format!("label order {:?}, expected {expected_order:?}", manifest.label_order)));
    }
    let head_raw = read(&manifest.head.file)?;
    if sha256_hex(&head_raw) != manifest.head.sha256 {
        return Err(bad(format!("{} checksum mismatch", manifest.head.file)));
    }
    let head = head_from_bytes(&head_raw).map_err(bad)?;

    let backend = match &manifest.backend {
        BackendRef::OfflineTest { version, dim, seed, max_sequence_length } => {
            if version != OFFLINE_BACKEND_VERSION {
                return Err(bad(format!("offline backend version {version}, expected {OFFLINE_BACKEND_VERSION}")));
            }
            if *dim == 0 {
                return Err(bad("offline backend dimension is zero".into()));
            }
            Backend::Offline(OfflineEncoder::new(*dim, *seed, *max_sequence_length))
        }
        BackendRef::Embedding { version, file, sha256, .. } => {
            if version != EMBEDDING_BACKEND_VERSION {
                return Err(bad(format!("embedding backend version {version}, expected {EMBEDDING_BACKEND_VERSION}")));
            }
            let raw = read(file)?;
            if &sha256_hex(&raw) != sha256 {
                return Err(bad(format!("{file} checksum mismatch")));
            }
            Backend::Embedding(EmbeddingEncoder::from_bytes(&raw).map_err(bad)?)
        }
    };
    if backend.dim() != head.dim() {
        return Err(bad(format!("backend dimension {} does not match head dimension {}", backend.dim(), head.dim())));
    }
    manifest.config.validate().map_err(|e| bad(e.to_string()))?;
    Ok(ModelArtifact {
        backend,
        head,
        config: manifest.config,
        best_epoch: manifest.best_epoch,
        best_f1: manifest.best_f1,
        label_order: manifest.label_order,
    })
}
