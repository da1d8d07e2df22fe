//! Keyword gazetteer over thesaurus concepts and catalog tags, whole-word
//! tweet filtering and batch classification of the retained posts.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clean::{clean_text, CleaningConfig};
use crate::harness::{load_artifact, ModelArtifact, PredictionResult};
use crate::ingest::{TagCatalog, Thesaurus};
use crate::text::{canonical, encoder_tokens};

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("keyword filter is empty: no thesaurus concepts and no tags")]
    Empty,
    #[error("tweet input line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub matched_keywords: BTreeSet<String>,
}

impl TweetRecord {
    pub fn new(id: &str, text: &str) -> Self {
        Self { id: id.to_owned(), text: text.to_owned(), created_at: None, matched_keywords: BTreeSet::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    /// Token-sequence match after folding a final plural `s`/`x`.
    #[default]
    WholeWord,
}

/// Light French plural fold: drop one final `s` or `x` when at least three
/// characters remain.
pub fn fold_plural(token: &str) -> &str {
    match token.strip_suffix(['s', 'x']) {
        Some(stem) if stem.chars().count() >= 3 => stem,
        _ => token,
    }
}

fn folded_tokens(text: &str) -> Vec<String> {
    encoder_tokens(text).iter().map(|t| fold_plural(t).to_owned()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordFilter {
    pub keywords: BTreeSet<String>,
    pub match_mode: MatchMode,
    /// Folded token sequences keyed by their first token.
    index: BTreeMap<String, Vec<(Vec<String>, String)>>,
}

impl KeywordFilter {
    pub fn new<I, S>(keywords: I) -> Result<Self, FilterError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let keywords: BTreeSet<String> =
            keywords.into_iter().map(|k| canonical(k.as_ref())).filter(|k| !k.is_empty()).collect();
        let mut index: BTreeMap<String, Vec<(Vec<String>, String)>> = BTreeMap::new();
        for k in &keywords {
            let toks = folded_tokens(k);
            if let Some(first) = toks.first() {
                index.entry(first.clone()).or_default().push((toks, k.clone()));
            }
        }
        if index.is_empty() {
            return Err(FilterError::Empty);
        }
        Ok(Self { keywords, match_mode: MatchMode::WholeWord, index })
    }

    /// Keywords occurring in `text` as whole token sequences.
    pub fn matches(&self, text: &str) -> BTreeSet<String> {
        let toks = folded_tokens(text);
        let mut found = BTreeSet::new();
        for (i, t) in toks.iter().enumerate() {
            if let Some(cands) = self.index.get(t) {
                for (seq, kw) in cands {
                    if toks[i..].starts_with(seq) {
                        found.insert(kw.clone());
                    }
                }
            }
        }
        found
    }
}

/// Union of thesaurus concepts and every catalog tag name, crops included.
pub fn build_keyword_filter(thesaurus: &Thesaurus, catalog: &TagCatalog) -> Result<KeywordFilter, FilterError> {
    let tags = catalog.values().flatten().map(|t| t.name.as_str());
    KeywordFilter::new(thesaurus.concepts.iter().map(String::as_str).chain(tags))
}

/// Keep records mentioning at least one keyword, in input order, with
/// `matched_keywords` filled in.
pub fn filter_tweets(records: &[TweetRecord], filter: &KeywordFilter) -> Vec<TweetRecord> {
    records
        .par_iter()
        .filter_map(|r| {
            let found = filter.matches(&r.text);
            (!found.is_empty()).then(|| TweetRecord { matched_keywords: found, ..r.clone() })
        })
        .collect()
}

pub fn parse_tweets_jsonl<R: BufRead>(r: R) -> Result<Vec<TweetRecord>, FilterError> {
    #[derive(Deserialize)]
    struct Input {
        id: serde_json::Value,
        text: String,
        #[serde(default)]
        created_at: Option<String>,
    }
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| FilterError::Schema { line: i + 1, message };
        let rec: Input = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        let id = match rec.id {
            serde_json::Value::String(s) => s,
            serde_json::Value::Number(n) => n.to_string(),
            other => return Err(schema(format!("id must be a string or number, found {other}"))),
        };
        out.push(TweetRecord { id, text: rec.text, created_at: rec.created_at, matched_keywords: BTreeSet::new() });
    }
    Ok(out)
}

/// Where tweets come from: query terms in, records out.
pub trait TweetSource {
    fn fetch(&self, query: &[String]) -> Result<Vec<TweetRecord>, FilterError>;
}

/// Reads a JSONL dump and keeps the records matching the query terms (all
/// records for an empty query).
#[derive(Debug, Clone)]
pub struct JsonlTweetSource {
    pub path: PathBuf,
}

impl TweetSource for JsonlTweetSource {
    fn fetch(&self, query: &[String]) -> Result<Vec<TweetRecord>, FilterError> {
        let records = parse_tweets_jsonl(io::BufReader::new(fs::File::open(&self.path)?))?;
        if query.is_empty() {
            return Ok(records);
        }
        Ok(filter_tweets(&records, &KeywordFilter::new(query)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetPrediction {
    #[serde(flatten)]
    pub record: TweetRecord,
    pub cleaned_text: String,
    #[serde(flatten)]
    pub outcome: TweetOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TweetOutcome {
    Ok { probabilities: BTreeMap<String, f64>, decided: Vec<String>, threshold: f64 },
    Err { error: String },
}

impl TweetOutcome {
    fn from_result(r: &PredictionResult) -> Self {
        Self::Ok {
            probabilities: r.probabilities.clone(),
            decided: r.decided_labels().into_iter().map(str::to_owned).collect(),
            threshold: r.threshold_used,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, Self::Ok { .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub n_records: usize,
    pub n_ok: usize,
    pub n_errors: usize,
    /// Distinct error messages with their counts.
    pub errors: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TweetBatch {
    pub predictions: Vec<TweetPrediction>,
    pub summary: ErrorSummary,
}

fn batch(records: &[TweetRecord], predict: impl Fn(&str) -> Result<PredictionResult, String> + Sync) -> TweetBatch {
    let cfg = CleaningConfig::tweet();
    let predictions: Vec<TweetPrediction> = records
        .par_iter()
        .map(|r| {
            let (cleaned, _) = clean_text(&r.text, &cfg);
            let outcome = match predict(&cleaned) {
                Ok(p) => TweetOutcome::from_result(&p),
                Err(error) => TweetOutcome::Err { error },
            };
            TweetPrediction { record: r.clone(), cleaned_text: cleaned, outcome }
        })
        .collect();
    let mut summary = ErrorSummary { n_records: predictions.len(), ..Default::default() };
    for p in &predictions {
        match &p.outcome {
            TweetOutcome::Ok { .. } => summary.n_ok += 1,
            TweetOutcome::Err { error } => {
                summary.n_errors += 1;
                *summary.errors.entry(error.clone()).or_default() += 1;
            }
        }
    }
    TweetBatch { predictions, summary }
}

/// Clean each tweet (URLs, phones, whitespace only) and classify it.
pub fn classify_tweets(records: &[TweetRecord], artifact: &ModelArtifact, threshold: f64) -> TweetBatch {
    if !(threshold > 0.0 && threshold < 1.0) {
        let msg = format!("threshold {threshold} not in (0, 1)");
        return batch(records, |_| Err(msg.clone()));
    }
    batch(records, |text| Ok(artifact.predict_with(text, threshold)))
}

/// As [`classify_tweets`], loading the artifact first. A load failure is
/// reported on every record; the batch still completes.
pub fn classify_tweets_from_dir(records: &[TweetRecord], artifact_dir: &Path, threshold: f64) -> TweetBatch {
    match load_artifact(artifact_dir) {
        Ok(a) => classify_tweets(records, &a, threshold),
        Err(e) => {
            let msg = e.to_string();
            batch(records, |_| Err(msg.clone()))
        }
    }
}

pub fn write_tweet_predictions_jsonl<W: Write>(mut w: W, predictions: &[TweetPrediction]) -> io::Result<()> {
    for p in predictions {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}
