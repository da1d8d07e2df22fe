use super::backend::{Capabilities, EncoderBackend};
use crate::text::stable_hash;

pub const OFFLINE_BACKEND_NAME: &str = "offline-test";
pub const OFFLINE_BACKEND_VERSION: &str = "hashed-bow/v1";

/// Deterministic bag-of-hashed-tokens encoder, L2-normalized. Needs no
/// weights; it cannot be language-model fine-tuned.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineEncoder {
    dim: usize,
    seed: u64,
    max_sequence_length: usize,
}

impl OfflineEncoder {
    pub const DEFAULT_DIM: usize = 512;

    pub fn new(dim: usize, seed: u64, max_sequence_length: usize) -> Self {
        assert!(dim > 0, "encoder dimension must be positive");
        Self { dim, seed, max_sequence_length }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bucket(&self, token: &str) -> usize {
        (stable_hash(self.seed, token.as_bytes()) % self.dim as u64) as usize
    }
}

impl Default for OfflineEncoder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM, 0, 256)
    }
}

impl EncoderBackend for OfflineEncoder {
    fn name(&self) -> &str {
        OFFLINE_BACKEND_NAME
    }

    fn version(&self) -> &str {
        OFFLINE_BACKEND_VERSION
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn max_sequence_length(&self) -> usize {
        self.max_sequence_length
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { lm_finetune: false, encode: true }
    }

    fn token_vectors(&self, tokens: &[String]) -> Vec<Vec<f64>> {
        tokens
            .iter()
            .map(|t| {
                let mut v = vec![0.0; self.dim];
                v[self.bucket(t)] = 1.0;
                v
            })
            .collect()
    }

    fn summary_vector(&self, tokens: &[String]) -> Option<Vec<f64>> {
        let mut v = vec![0.0; self.dim];
        for t in tokens {
            v[self.bucket(t)] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Some(v)
    }
}
