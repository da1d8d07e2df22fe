use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::embedding::EmbeddingEncoder;
use super::offline::OfflineEncoder;
use crate::text::encoder_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub lm_finetune: bool,
    pub encode: bool,
}

/// Text encoder contract used by both training stages.
///
/// Implementations map a token sequence to vectors. [`encode`] truncates the
/// canonical token sequence to the first `max_sequence_length` tokens and
/// returns the backend's summary vector when it has one, otherwise the mean of
/// the token vectors. It must be deterministic.
///
/// [`encode`]: EncoderBackend::encode
pub trait EncoderBackend: Send + Sync {
    fn name(&self) -> &str;
    fn version(&self) -> &str;
    fn dim(&self) -> usize;
    fn max_sequence_length(&self) -> usize;
    fn capabilities(&self) -> Capabilities;
    fn token_vectors(&self, tokens: &[String]) -> Vec<Vec<f64>>;

    fn summary_vector(&self, _tokens: &[String]) -> Option<Vec<f64>> {
        None
    }

    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut tokens = encoder_tokens(text);
        tokens.truncate(self.max_sequence_length());
        tokens
    }

    fn encode(&self, text: &str) -> Vec<f64> {
        let tokens = self.tokenize(text);
        if let Some(v) = self.summary_vector(&tokens) {
            return v;
        }
        let mut pooled = vec![0.0; self.dim()];
        if tokens.is_empty() {
            return pooled;
        }
        let vectors = self.token_vectors(&tokens);
        for v in &vectors {
            pooled.iter_mut().zip(v).for_each(|(p, x)| *p += x);
        }
        let n = vectors.len() as f64;
        pooled.iter_mut().for_each(|p| *p /= n);
        pooled
    }
}

/// The concrete backends an artifact can carry.
#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Offline(OfflineEncoder),
    Embedding(EmbeddingEncoder),
}

impl Backend {
    fn inner(&self) -> &dyn EncoderBackend {
        match self {
            Backend::Offline(b) => b,
            Backend::Embedding(b) => b,
        }
    }
}

impl EncoderBackend for Backend {
    fn name(&self) -> &str {
        self.inner().name()
    }
    fn version(&self) -> &str {
        self.inner().version()
    }
    fn dim(&self) -> usize {
        self.inner().dim()
    }
    fn max_sequence_length(&self) -> usize {
        self.inner().max_sequence_length()
    }
    fn capabilities(&self) -> Capabilities {
        self.inner().capabilities()
    }
    fn token_vectors(&self, tokens: &[String]) -> Vec<Vec<f64>> {
        self.inner().token_vectors(tokens)
    }
    fn summary_vector(&self, tokens: &[String]) -> Option<Vec<f64>> {
        self.inner().summary_vector(tokens)
    }
    fn encode(&self, text: &str) -> Vec<f64> {
        self.inner().encode(text)
    }
}

/// Backend selection as written in configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    /// `offline-test`
    OfflineTest,
    /// `pretrained:<path>`: an embedding-encoder checkpoint on disk.
    Pretrained(PathBuf),
    /// `embedding-init`: a freshly initialized embedding encoder.
    EmbeddingInit,
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "offline-test" => Ok(Self::OfflineTest),
            "embedding-init" => Ok(Self::EmbeddingInit),
            _ => match s.strip_prefix("pretrained:") {
                Some(p) if !p.is_empty() => Ok(Self::Pretrained(PathBuf::from(p))),
                _ => Err(format!(
                    "unknown backend {s:?} (expected offline-test, embedding-init or pretrained:<path>)"
                )),
            },
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::OfflineTest => f.write_str("offline-test"),
            Self::EmbeddingInit => f.write_str("embedding-init"),
            Self::Pretrained(p) => write!(f, "pretrained:{}", p.display()),
        }
    }
}

/// Backend identity recorded in artifacts and run reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendRef {
    OfflineTest { version: String, dim: usize, seed: u64, max_sequence_length: usize },
    Embedding { version: String, file: String, sha256: String, dim: usize, buckets: usize },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_specs() {
        assert_eq!("offline-test".parse::<BackendSpec>().unwrap(), BackendSpec::OfflineTest);
        assert_eq!(
            "pretrained:/models/enc.bin".parse::<BackendSpec>().unwrap(),
            BackendSpec::Pretrained("/models/enc.bin".into())
        );
        assert!("pretrained:".parse::<BackendSpec>().is_err());
        assert!("camembert".parse::<BackendSpec>().is_err());
        assert_eq!(BackendSpec::Pretrained("a/b".into()).to_string(), "pretrained:a/b");
    }
}
