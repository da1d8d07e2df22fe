//! A small trainable encoder: hashed-vocabulary token embeddings, mean
//! pooled, with a masked-token prediction objective for domain adaptation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::backend::{Capabilities, EncoderBackend};
use super::{TrainError, TrainingConfig};
use crate::text::stable_hash;

pub const EMBEDDING_BACKEND_NAME: &str = "embedding-mlm";
pub const EMBEDDING_BACKEND_VERSION: &str = "embedding-mlm/v1";

const MAGIC: &[u8; 8] = b"PHYEMB01";
const MASK_RATE: f64 = 0.15;
/// Seed of the fixed masking pattern used for held-out loss.
const HELDOUT_MASK_SEED: u64 = 0x5EED_4E1D;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingEncoder {
    buckets: usize,
    dim: usize,
    hash_seed: u64,
    max_sequence_length: usize,
    /// `buckets x dim` input embeddings.
    input: Vec<f64>,
    /// `buckets x dim` output embeddings of the masked-token softmax.
    output: Vec<f64>,
    output_bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmReport {
    pub backend: String,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub n_train_lines: usize,
    pub n_heldout_lines: usize,
    pub per_epoch_train_loss: Vec<f64>,
    pub heldout_loss_before: f64,
    pub heldout_loss_after: f64,
}

struct MaskedExample {
    target: usize,
    context: Vec<usize>,
}

impl EmbeddingEncoder {
    pub fn init(buckets: usize, dim: usize, hash_seed: u64, max_sequence_length: usize, init_seed: u64) -> Self {
        assert!(buckets > 1 && dim > 0, "embedding encoder needs buckets > 1 and dim > 0");
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-scale..scale)).collect::<Vec<f64>>();
        let input = draw(buckets * dim);
        let output = draw(buckets * dim);
        Self { buckets, dim, hash_seed, max_sequence_length, input, output, output_bias: vec![0.0; buckets] }
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn set_max_sequence_length(&mut self, n: usize) {
        self.max_sequence_length = n;
    }

    fn bucket(&self, token: &str) -> usize {
        (stable_hash(self.hash_seed, token.as_bytes()) % self.buckets as u64) as usize
    }

    fn row(m: &[f64], dim: usize, i: usize) -> &[f64] {
        &m[i * dim..(i + 1) * dim]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 8 * (2 * self.input.len() + self.buckets));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.buckets as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&self.hash_seed.to_le_bytes());
        out.extend_from_slice(&(self.max_sequence_length as u32).to_le_bytes());
        for x in self.input.iter().chain(&self.output).chain(&self.output_bias) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() < 28 || &bytes[..8] != MAGIC {
            return Err("not an embedding-encoder checkpoint".into());
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let buckets = u32_at(8);
        let dim = u32_at(12);
        let hash_seed = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let max_sequence_length = u32_at(24);
        let n = buckets * dim;
        let expected = 28 + 8 * (2 * n + buckets);
        if buckets < 2 || dim == 0 || bytes.len() != expected {
            return Err(format!("checkpoint size {} does not match header (expected {expected})", bytes.len()));
        }
        let floats: Vec<f64> =
            bytes[28..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self {
            buckets,
            dim,
            hash_seed,
            max_sequence_length,
            input: floats[..n].to_vec(),
            output: floats[n..2 * n].to_vec(),
            output_bias: floats[2 * n..].to_vec(),
        })
    }

    fn masked_examples(&self, line: &str, rng: &mut ChaCha8Rng) -> Vec<MaskedExample> {
        let ids: Vec<usize> = self.tokenize(line).iter().map(|t| self.bucket(t)).collect();
        if ids.len() < 2 {
            return Vec::new();
        }
        let mut masked: Vec<bool> = ids.iter().map(|_| rng.gen_bool(MASK_RATE)).collect();
        if !masked.iter().any(|m| *m) {
            masked[rng.gen_range(0..ids.len())] = true;
        }
        if masked.iter().all(|m| *m) {
            masked[rng.gen_range(0..ids.len())] = false;
        }
        let context: Vec<usize> = ids.iter().zip(&masked).filter(|(_, m)| !**m).map(|(i, _)| *i).collect();
        ids.iter()
            .zip(&masked)
            .filter(|(_, m)| **m)
            .map(|(&target, _)| MaskedExample { target, context: context.clone() })
            .collect()
    }

    fn context_vector(&self, context: &[usize]) -> Vec<f64> {
        let mut h = vec![0.0; self.dim];
        for &c in context {
            h.iter_mut().zip(Self::row(&self.input, self.dim, c)).for_each(|(a, b)| *a += b);
        }
        let n = context.len() as f64;
        h.iter_mut().for_each(|a| *a /= n);
        h
    }

    /// Softmax over the vocabulary buckets; returns (probabilities, loss).
    fn predict_masked(&self, h: &[f64], target: usize) -> (Vec<f64>, f64) {
        let mut logits: Vec<f64> = (0..self.buckets)
            .map(|v| {
                Self::row(&self.output, self.dim, v).iter().zip(h).map(|(a, b)| a * b).sum::<f64>()
                    + self.output_bias[v]
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            z += *l;
        }
        logits.iter_mut().for_each(|l| *l /= z);
        let loss = -(logits[target].max(f64::MIN_POSITIVE)).ln();
        (logits, loss)
    }

    /// Mean masked-token cross-entropy under a fixed masking pattern.
    pub fn masked_loss(&self, lines: &[String]) -> f64 {
        let (mut total, mut n) = (0.0, 0usize);
        for (i, line) in lines.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(HELDOUT_MASK_SEED ^ i as u64);
            for ex in self.masked_examples(line, &mut rng) {
                let h = self.context_vector(&ex.context);
                total += self.predict_masked(&h, ex.target).1;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            total / n as f64
        }
    }

    /// Masked-token training with Adam. The last tenth of the lines (at least
    /// one) is held out to measure loss before and after.
    pub fn finetune(&mut self, lines: &[String], cfg: &TrainingConfig) -> Result<LmReport, TrainError> {
        let usable: Vec<String> = lines.iter().filter(|l| self.tokenize(l).len() >= 2).cloned().collect();
        if usable.is_empty() {
            return Err(TrainError::EmptyCorpus);
        }
        let n_heldout = if usable.len() >= 2 { (usable.len() / 10).max(1) } else { 0 };
        let (train, heldout) = usable.split_at(usable.len() - n_heldout);
        // a single usable line is both trained on and measured
        let heldout: &[String] = if heldout.is_empty() { train } else { heldout };

        let before = self.masked_loss(heldout);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut opt = Adam::new(cfg.lm_learning_rate, &[self.input.len(), self.output.len(), self.buckets]);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut per_epoch = Vec::with_capacity(cfg.lm_epochs);
        let (mut g_in, mut g_out, mut g_b) =
            (vec![0.0; self.input.len()], vec![0.0; self.output.len()], vec![0.0; self.buckets]);

        for _ in 0..cfg.lm_epochs {
            order.shuffle(&mut rng);
            let (mut epoch_loss, mut epoch_n) = (0.0, 0usize);
            for batch in order.chunks(cfg.batch_size.max(1)) {
                g_in.iter_mut().for_each(|g| *g = 0.0);
                g_out.iter_mut().for_each(|g| *g = 0.0);
                g_b.iter_mut().for_each(|g| *g = 0.0);
                let mut n_pred = 0usize;
                for &li in batch {
                    for ex in self.masked_examples(&train[li], &mut rng) {
                        let h = self.context_vector(&ex.context);
                        let (mut probs, loss) = self.predict_masked(&h, ex.target);
                        epoch_loss += loss;
                        n_pred += 1;
                        probs[ex.target] -= 1.0;
                        let mut dh = vec![0.0; self.dim];
                        for (v, &d) in probs.iter().enumerate() {
                            g_b[v] += d;
                            let o = Self::row(&self.output, self.dim, v);
                            let go = &mut g_out[v * self.dim..(v + 1) * self.dim];
                            for k in 0..self.dim {
                                go[k] += d * h[k];
                                dh[k] += d * o[k];
                            }
                        }
                        let share = 1.0 / ex.context.len() as f64;
                        for &c in &ex.context {
                            let gi = &mut g_in[c * self.dim..(c + 1) * self.dim];
                            gi.iter_mut().zip(&dh).for_each(|(g, d)| *g += d * share);
                        }
                    }
                }
                if n_pred == 0 {
                    continue;
                }
                epoch_n += n_pred;
                let scale = 1.0 / n_pred as f64;
                for g in g_in.iter_mut().chain(g_out.iter_mut()).chain(g_b.iter_mut()) {
                    *g *= scale;
                }
                opt.step(&mut [&mut self.input, &mut self.output, &mut self.output_bias], &[&g_in, &g_out, &g_b]);
            }
            let mean = epoch_loss / epoch_n.max(1) as f64;
            if !mean.is_finite() {
                return Err(TrainError::Diverged);
            }
            per_epoch.push(mean);
        }
        let after = self.masked_loss(heldout);
        Ok(LmReport {
            backend: EMBEDDING_BACKEND_VERSION.into(),
            epochs: cfg.lm_epochs,
            learning_rate: cfg.lm_learning_rate,
            batch_size: cfg.batch_size,
            n_train_lines: train.len(),
            n_heldout_lines: heldout.len(),
            per_epoch_train_loss: per_epoch,
            heldout_loss_before: before,
            heldout_loss_after: after,
        })
    }
}

impl EncoderBackend for EmbeddingEncoder {
    fn name(&self) -> &str {
        EMBEDDING_BACKEND_NAME
    }

    fn version(&self) -> &str {
        EMBEDDING_BACKEND_VERSION
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn max_sequence_length(&self) -> usize {
        self.max_sequence_length
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { lm_finetune: true, encode: true }
    }

    fn token_vectors(&self, tokens: &[String]) -> Vec<Vec<f64>> {
        tokens.iter().map(|t| Self::row(&self.input, self.dim, self.bucket(t)).to_vec()).collect()
    }
}
