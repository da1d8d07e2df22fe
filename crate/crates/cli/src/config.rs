use std::path::{Path, PathBuf};

use phyto_core::clean::CleaningConfig;
use phyto_core::dataset::{ChunkParams, LmCorpusSource, TopicParams};
use phyto_core::harness::{BackendSpec, TrainingConfig};
use phyto_core::ingest::XmlExtractConfig;
use phyto_core::metrics::AucAveraging;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Input locations, relative to the data root unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory of `*.txt` (OCR) and `*.xml` bulletins.
    pub bulletins: PathBuf,
    pub tags: PathBuf,
    pub thesaurus: PathBuf,
    pub tweets: PathBuf,
    pub risk_annotations: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            bulletins: "bulletins".into(),
            tags: "tags.csv".into(),
            thesaurus: "thesaurus.txt".into(),
            tweets: "tweets.jsonl".into(),
            risk_annotations: "risk_sentences.jsonl".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    Topic,
    Risk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub task: Task,
    pub n_docs: usize,
    pub target_chunks: Option<usize>,
    pub min_words: usize,
    pub max_words: usize,
    pub split_ratio: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let t = TopicParams::default();
        Self {
            task: Task::Topic,
            n_docs: t.n_docs,
            target_chunks: t.target_chunks,
            min_words: t.chunk.min_words,
            max_words: t.chunk.max_words,
            split_ratio: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmCorpusSection {
    pub source: LmCorpusSource,
    pub cleaning: CleaningConfig,
}

impl Default for LmCorpusSection {
    fn default() -> Self {
        Self { source: LmCorpusSource::default(), cleaning: CleaningConfig::lm_corpus() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub auc_averaging: AucAveraging,
}

/// The whole run configuration. Every field has a default; unknown keys are
/// schema errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub backend: String,
    pub offline_dim: usize,
    /// Hash seed of the offline encoder. Kept apart from `seed` so the
    /// encoder stays fixed while the run seed varies sampling and training.
    pub offline_seed: u64,
    pub paths: Paths,
    pub xml: XmlExtractConfig,
    pub cleaning: CleaningConfig,
    pub lm_corpus: LmCorpusSection,
    pub dataset: DatasetSection,
    pub training: TrainingConfig,
    pub evaluation: EvaluationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            out_dir: "runs".into(),
            seed: 0,
            jobs: None,
            backend: BackendSpec::OfflineTest.to_string(),
            offline_dim: 512,
            offline_seed: 0,
            paths: Paths::default(),
            xml: XmlExtractConfig::default(),
            cleaning: CleaningConfig::classification(),
            lm_corpus: LmCorpusSection::default(),
            dataset: DatasetSection::default(),
            training: TrainingConfig::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub threshold: Option<f64>,
    pub backend: Option<String>,
    pub out: Option<PathBuf>,
    pub env_data_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Schema(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("config {}: {e}", path.display())))
    }

    /// Apply overrides, propagate the seed and validate.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self, CliError> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(j) = o.jobs {
            self.jobs = Some(j);
        }
        if let Some(t) = o.threshold {
            self.training.threshold = t;
        }
        if let Some(b) = &o.backend {
            self.backend = b.clone();
        }
        if let Some(out) = &o.out {
            self.out_dir = out.clone();
        }
        if self.data_dir.is_none() {
            self.data_dir = o.env_data_dir.clone();
        }
        self.training.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), CliError> {
        let schema = |m: String| Err(CliError::Schema(m));
        if let Err(e) = self.training.validate() {
            return schema(e.to_string());
        }
        if let Err(e) = self.cleaning.validate() {
            return schema(format!("cleaning: {e}"));
        }
        if let Err(e) = self.lm_corpus.cleaning.validate() {
            return schema(format!("lm_corpus.cleaning: {e}"));
        }
        if self.jobs == Some(0) {
            return schema("jobs must be positive".into());
        }
        if self.offline_dim == 0 {
            return schema("offline_dim must be positive".into());
        }
        let d = &self.dataset;
        if !(d.split_ratio > 0.0 && d.split_ratio < 1.0) {
            return schema(format!("dataset.split_ratio {} not in (0, 1)", d.split_ratio));
        }
        if d.min_words == 0 || d.min_words > d.max_words {
            return schema(format!("dataset chunk bounds [{}, {}]", d.min_words, d.max_words));
        }
        self.backend_spec()?;
        Ok(())
    }

    pub fn backend_spec(&self) -> Result<BackendSpec, CliError> {
        self.backend.parse().map_err(CliError::Schema)
    }

    pub fn data_path(&self, p: &Path) -> PathBuf {
        match &self.data_dir {
            Some(root) if p.is_relative() => root.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn topic_params(&self) -> TopicParams {
        TopicParams {
            n_docs: self.dataset.n_docs,
            target_chunks: self.dataset.target_chunks,
            chunk: ChunkParams { min_words: self.dataset.min_words, max_words: self.dataset.max_words },
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        let empty: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(empty, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"trainin": {}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"training": {"lr": 1}}"#).is_err());
    }

    #[test]
    fn flags_win_and_seed_propagates() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 3, "training": {"threshold": 0.4}}"#).unwrap();
        let o = Overrides { seed: Some(9), threshold: Some(0.7), ..Default::default() };
        let r = c.resolve(&o).unwrap();
        assert_eq!((r.seed, r.training.seed, r.training.threshold), (9, 9, 0.7));
    }

    #[test]
    fn bad_values_are_schema_errors() {
        for o in [
            Overrides { threshold: Some(1.0), ..Default::default() },
            Overrides { backend: Some("bert".into()), ..Default::default() },
            Overrides { jobs: Some(0), ..Default::default() },
        ] {
            assert!(matches!(RunConfig::default().resolve(&o), Err(CliError::Schema(_))));
        }
    }

    #[test]
    fn config_data_dir_beats_env() {
        let c = RunConfig { data_dir: Some("a".into()), ..Default::default() };
        let r = c.resolve(&Overrides { env_data_dir: Some("b".into()), ..Default::default() }).unwrap();
        assert_eq!(r.data_path(Path::new("x")), PathBuf::from("a/x"));
        assert_eq!(r.data_path(Path::new("/abs")), PathBuf::from("/abs"));
    }
}
