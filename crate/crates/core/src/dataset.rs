//! Weakly labeled datasets: language-model corpus, topic chunks with labels
//! propagated from document tags, ingested risk annotations, and
//! document-level train/test splits.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clean::{self, CleanedDocument, CleaningConfig};
use crate::ingest::{RawDocument, SourceKind, TagCatalog, TagCategory, TagRef};
use crate::text::{stable_hash, word_count};

pub const CHUNKER_RULE: &str = "chunker/uniform-length-partition/v1";
pub const SPLIT_RULE: &str = "split/document-level-shuffle/v1";

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("no usable paragraphs for the language-model corpus")]
    EmptyCorpus,
    #[error("need {needed} tagged documents, only {available} available")]
    InsufficientDocs { needed: usize, available: usize },
    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("cannot split: examples come from {docs} document(s)")]
    DegenerateSplit { docs: usize },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Bioagressor,
    Disease,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Bioagressor, Label::Disease];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Bioagressor => "bioagressor",
            Label::Disease => "disease",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelSet {
    pub bioagressor: bool,
    pub disease: bool,
}

impl LabelSet {
    pub fn new(bioagressor: bool, disease: bool) -> Self {
        Self { bioagressor, disease }
    }

    pub fn get(&self, label: Label) -> bool {
        match label {
            Label::Bioagressor => self.bioagressor,
            Label::Disease => self.disease,
        }
    }

    pub fn set(&mut self, label: Label, value: bool) {
        match label {
            Label::Bioagressor => self.bioagressor = value,
            Label::Disease => self.disease = value,
        }
    }

    pub fn labels(&self) -> Vec<Label> {
        Label::ALL.into_iter().filter(|l| self.get(*l)).collect()
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// A labeled text unit. Topic chunks and risk sentences share this record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub text: String,
    pub word_count: usize,
    #[serde(flatten)]
    pub labels: LabelSet,
    /// The trailing remainder was merged in, so the chunk may exceed the
    /// maximum length by fewer than `min_words` words.
    #[serde(default, skip_serializing_if = "is_false")]
    pub merged_remainder: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkParams {
    pub min_words: usize,
    pub max_words: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        Self { min_words: 5, max_words: 256 }
    }
}

/// Partition a cleaned document's word sequence into chunks whose lengths are
/// drawn uniformly from `[min_words, max_words]`. A remainder shorter than
/// `min_words` joins the previous chunk; documents shorter than `min_words`
/// produce nothing. The draw sequence depends only on `(seed, doc.id)`.
pub fn chunk_document(doc: &CleanedDocument, params: ChunkParams, seed: u64) -> Vec<Chunk> {
    assert!(
        params.min_words >= 1 && params.min_words <= params.max_words,
        "chunk bounds must satisfy 1 <= min_words <= max_words"
    );
    let words: Vec<&str> = doc.text.split_whitespace().collect();
    if words.len() < params.min_words {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(seed, doc.id.as_bytes()));
    let mut bounds: Vec<(usize, usize, bool)> = Vec::new();
    let mut start = 0;
    while start < words.len() {
        let remaining = words.len() - start;
        let len = rng.gen_range(params.min_words..=params.max_words);
        if len >= remaining {
            bounds.push((start, words.len(), false));
            break;
        }
        let end = start + len;
        if words.len() - end < params.min_words {
            bounds.push((start, words.len(), words.len() - start > params.max_words));
            break;
        }
        bounds.push((start, end, false));
        start = end;
    }
    bounds
        .into_iter()
        .enumerate()
        .map(|(i, (s, e, over))| Chunk {
            chunk_id: format!("{}#{i}", doc.id),
            doc_id: doc.id.clone(),
            text: words[s..e].join(" "),
            word_count: e - s,
            labels: LabelSet::default(),
            merged_remainder: over,
        })
        .collect()
}

/// Hazard labels implied by document tags. Crop tags carry no label.
pub fn labels_from_tags<'a>(tags: impl IntoIterator<Item = &'a TagRef>) -> LabelSet {
    let mut labels = LabelSet::default();
    for tag in tags {
        match tag.category {
            TagCategory::Bioagressor => labels.bioagressor = true,
            TagCategory::Disease => labels.disease = true,
            TagCategory::Crop => {}
        }
    }
    labels
}

pub fn propagate_labels(mut chunk: Chunk, doc_tags: &BTreeSet<TagRef>) -> Chunk {
    chunk.labels = labels_from_tags(doc_tags);
    chunk
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LmCorpusSource {
    /// Paragraphs of XML bulletins.
    #[default]
    XmlParagraphs,
    /// Cleaned lines of OCR plain-text bulletins.
    RawText,
    Both,
}

/// One cleaned paragraph per line.
pub fn build_lm_corpus(
    docs: &[RawDocument],
    cfg: &CleaningConfig,
    source: LmCorpusSource,
) -> Result<Vec<String>, BuildError> {
    use rayon::prelude::*;
    let take_xml = matches!(source, LmCorpusSource::XmlParagraphs | LmCorpusSource::Both);
    let take_raw = matches!(source, LmCorpusSource::RawText | LmCorpusSource::Both);
    let per_doc: Vec<Vec<String>> = docs
        .par_iter()
        .map(|doc| match doc.source_kind {
            SourceKind::BsvXml if take_xml => doc
                .paragraphs
                .iter()
                .map(|p| clean::clean_text(p, cfg).0.replace('\n', " "))
                .filter(|l| !l.is_empty())
                .collect(),
            SourceKind::BsvOcr if take_raw => {
                clean::clean_text(&doc.text, cfg).0.lines().map(str::to_owned).collect()
            }
            _ => Vec::new(),
        })
        .collect();
    let lines: Vec<String> = per_doc.into_iter().flatten().collect();
    if lines.is_empty() {
        return Err(BuildError::EmptyCorpus);
    }
    Ok(lines)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicParams {
    pub n_docs: usize,
    /// Cap on the number of chunks; a larger pool is subsampled with the seed.
    pub target_chunks: Option<usize>,
    pub chunk: ChunkParams,
    pub seed: u64,
}

impl Default for TopicParams {
    fn default() -> Self {
        Self { n_docs: 200, target_chunks: Some(4000), chunk: ChunkParams::default(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub n_docs: usize,
    pub doc_ids: Vec<String>,
    pub min_words: usize,
    pub max_words: usize,
    pub target_chunks: Option<usize>,
    pub chunks_before_cap: usize,
    pub n_chunks: usize,
    pub merged_remainders: usize,
    pub label_counts: BTreeMap<String, usize>,
    pub rule_versions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicDataset {
    pub chunks: Vec<Chunk>,
    pub manifest: DatasetManifest,
}

pub fn rule_versions() -> BTreeMap<String, String> {
    [
        ("chunker", CHUNKER_RULE),
        ("split", SPLIT_RULE),
        ("url", clean::URL_RULE),
        ("phone", clean::PHONE_RULE),
        ("spaced_letters", clean::SPACED_LETTERS_RULE),
        ("stopwords", clean::STOPWORDS_FR_VERSION),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v.to_owned()))
    .collect()
}

/// Sample `n_docs` catalogued documents, chunk them and label every chunk
/// from its document's tags.
pub fn build_topic_dataset(
    docs: &[CleanedDocument],
    catalog: &TagCatalog,
    params: TopicParams,
) -> Result<TopicDataset, BuildError> {
    use rayon::prelude::*;
    let c = params.chunk;
    if c.min_words == 0 || c.min_words > c.max_words {
        return Err(BuildError::InvalidParams(format!("chunk bounds [{}, {}]", c.min_words, c.max_words)));
    }
    let mut tagged: Vec<&CleanedDocument> = docs.iter().filter(|d| catalog.contains_key(&d.id)).collect();
    tagged.sort_by(|a, b| a.id.cmp(&b.id));
    tagged.dedup_by(|a, b| a.id == b.id);
    if tagged.len() < params.n_docs {
        return Err(BuildError::InsufficientDocs { needed: params.n_docs, available: tagged.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (picked, _) = tagged.partial_shuffle(&mut rng, params.n_docs);
    let mut picked: Vec<&CleanedDocument> = picked.to_vec();
    picked.sort_by(|a, b| a.id.cmp(&b.id));

    let per_doc: Vec<Vec<Chunk>> = picked
        .par_iter()
        .map(|doc| {
            let tags = &catalog[&doc.id];
            chunk_document(doc, c, params.seed).into_iter().map(|ch| propagate_labels(ch, tags)).collect()
        })
        .collect();
    let mut chunks: Vec<Chunk> = per_doc.into_iter().flatten().collect();
    let chunks_before_cap = chunks.len();
    if let Some(target) = params.target_chunks {
        if chunks.len() > target {
            let mut keep = rand::seq::index::sample(&mut rng, chunks.len(), target).into_vec();
            keep.sort_unstable();
            let mut it = keep.into_iter().peekable();
            chunks = chunks
                .into_iter()
                .enumerate()
                .filter_map(|(i, ch)| (it.next_if_eq(&i).is_some()).then_some(ch))
                .collect();
        }
    }

    let mut label_counts = BTreeMap::new();
    for label in Label::ALL {
        label_counts.insert(label.as_str().to_owned(), chunks.iter().filter(|ch| ch.labels.get(label)).count());
    }
    let manifest = DatasetManifest {
        seed: params.seed,
        n_docs: params.n_docs,
        doc_ids: picked.iter().map(|d| d.id.clone()).collect(),
        min_words: c.min_words,
        max_words: c.max_words,
        target_chunks: params.target_chunks,
        chunks_before_cap,
        n_chunks: chunks.len(),
        merged_remainders: chunks.iter().filter(|ch| ch.merged_remainder).count(),
        label_counts,
        rule_versions: rule_versions(),
    };
    Ok(TopicDataset { chunks, manifest })
}

/// A manually labeled sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAnnotation {
    pub sentence: String,
    #[serde(flatten)]
    pub labels: LabelSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator_note: Option<String>,
    /// Source bulletin, when known; keeps sentences of one bulletin on one
    /// side of a split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RiskRecord {
    sentence: String,
    bioagressor: bool,
    disease: bool,
    #[serde(default)]
    annotator_note: Option<String>,
    #[serde(default)]
    doc_id: Option<String>,
}

pub fn parse_risk_annotations<R: BufRead>(r: R) -> Result<Vec<RiskAnnotation>, BuildError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RiskRecord = serde_json::from_str(&line)
            .map_err(|e| BuildError::Schema { line: i + 1, message: e.to_string() })?;
        if rec.sentence.trim().is_empty() {
            return Err(BuildError::Schema { line: i + 1, message: "empty sentence".into() });
        }
        out.push(RiskAnnotation {
            sentence: rec.sentence,
            labels: LabelSet::new(rec.bioagressor, rec.disease),
            annotator_note: rec.annotator_note,
            doc_id: rec.doc_id,
        });
    }
    Ok(out)
}

pub fn load_risk_annotations(path: &Path) -> Result<Vec<RiskAnnotation>, BuildError> {
    let f = std::fs::File::open(path)?;
    parse_risk_annotations(io::BufReader::new(f))
}

/// Risk sentences as dataset records. Sentences without a source bulletin
/// each form their own split group.
pub fn risk_examples(annotations: &[RiskAnnotation]) -> Vec<Chunk> {
    annotations
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let chunk_id = format!("risk-{i:04}");
            Chunk {
                doc_id: a.doc_id.clone().unwrap_or_else(|| chunk_id.clone()),
                chunk_id,
                text: a.sentence.clone(),
                word_count: word_count(&a.sentence),
                labels: a.labels,
                merged_remainder: false,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<Chunk>,
    pub test: Vec<Chunk>,
    /// Training documents in shuffled order; the tail is the validation slice.
    pub train_docs: Vec<String>,
    pub test_docs: Vec<String>,
    pub seed: u64,
    pub ratio: f64,
}

/// Split metadata without the examples, as written next to the data files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratio: f64,
    pub train_docs: Vec<String>,
    pub test_docs: Vec<String>,
    pub rule: String,
}

impl DatasetSplit {
    pub fn manifest(&self) -> SplitManifest {
        SplitManifest {
            seed: self.seed,
            ratio: self.ratio,
            train_docs: self.train_docs.clone(),
            test_docs: self.test_docs.clone(),
            rule: SPLIT_RULE.to_owned(),
        }
    }

    pub fn from_parts(manifest: SplitManifest, train: Vec<Chunk>, test: Vec<Chunk>) -> Self {
        Self {
            train,
            test,
            train_docs: manifest.train_docs,
            test_docs: manifest.test_docs,
            seed: manifest.seed,
            ratio: manifest.ratio,
        }
    }
}

/// Document-level split: documents (in first-appearance order) are shuffled
/// with the seed and the first `round(ratio * n_docs)` go to training,
/// clamped so both sides keep at least one document.
pub fn split_dataset(examples: &[Chunk], ratio: f64, seed: u64) -> Result<DatasetSplit, BuildError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(BuildError::InvalidParams(format!("split ratio {ratio} not in (0, 1)")));
    }
    let mut docs: Vec<String> = Vec::new();
    let mut seen = BTreeSet::new();
    for ex in examples {
        if seen.insert(ex.doc_id.as_str()) {
            docs.push(ex.doc_id.clone());
        }
    }
    if docs.len() < 2 {
        return Err(BuildError::DegenerateSplit { docs: docs.len() });
    }
    docs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ratio * docs.len() as f64).round() as usize).clamp(1, docs.len() - 1);
    let test_docs = docs.split_off(n_train);
    let train_set: BTreeSet<&str> = docs.iter().map(String::as_str).collect();
    let (train, test): (Vec<Chunk>, Vec<Chunk>) =
        examples.iter().cloned().partition(|ex| train_set.contains(ex.doc_id.as_str()));
    Ok(DatasetSplit { train, test, train_docs: docs, test_docs, seed, ratio })
}

pub fn write_examples_jsonl<W: Write>(mut w: W, examples: &[Chunk]) -> io::Result<()> {
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_examples_jsonl<R: BufRead>(r: R) -> Result<Vec<Chunk>, BuildError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| BuildError::Schema { line: i + 1, message: e.to_string() })?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clean::RemovedStats;
    use proptest::prelude::*;

    fn cleaned(id: &str, n_words: usize) -> CleanedDocument {
        let text = (0..n_words).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        CleanedDocument {
            id: id.into(),
            source_kind: SourceKind::BsvOcr,
            word_count: n_words,
            text,
            tags: BTreeSet::new(),
            removed_stats: RemovedStats::default(),
            empty: n_words == 0,
        }
    }

    fn tags(pairs: &[(&str, TagCategory)]) -> BTreeSet<TagRef> {
        pairs.iter().map(|(n, c)| TagRef::new(n, *c).unwrap()).collect()
    }

    #[test]
    fn short_document_yields_nothing() {
        assert!(chunk_document(&cleaned("d", 3), ChunkParams::default(), 1).is_empty());
        assert!(chunk_document(&cleaned("d", 0), ChunkParams::default(), 1).is_empty());
    }

    #[test]
    fn twelve_words_single_chunk_when_first_draw_covers_it() {
        let doc = cleaned("d", 12);
        // with max_words = 12 every draw covers the document
        let chunks = chunk_document(&doc, ChunkParams { min_words: 5, max_words: 12 }, 3);
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].word_count, 12);
        for seed in 0..50 {
            let chunks = chunk_document(&doc, ChunkParams::default(), seed);
            let total: usize = chunks.iter().map(|c| c.word_count).sum();
            assert_eq!(total, 12);
            assert!(chunks.iter().all(|c| c.word_count >= 5));
        }
    }

    #[test]
    fn remainder_merge_is_flagged() {
        // min 5, max 5: 14 words -> 5, then 9 (5 + remainder 4) flagged
        let chunks = chunk_document(&cleaned("d", 14), ChunkParams { min_words: 5, max_words: 5 }, 0);
        assert_eq!(chunks.iter().map(|c| c.word_count).collect::<Vec<_>>(), vec![5, 9]);
        assert!(chunks[1].merged_remainder);
        assert!(!chunks[0].merged_remainder);
    }

    #[test]
    fn label_propagation() {
        let ch = chunk_document(&cleaned("d", 10), ChunkParams::default(), 0).remove(0);
        let l = propagate_labels(ch.clone(), &tags(&[("pyrale", TagCategory::Bioagressor)])).labels;
        assert_eq!(l, LabelSet::new(true, false));
        let l = propagate_labels(
            ch.clone(),
            &tags(&[("mildiou", TagCategory::Disease), ("puceron", TagCategory::Bioagressor)]),
        )
        .labels;
        assert_eq!(l, LabelSet::new(true, true));
        let l = propagate_labels(ch, &tags(&[("blé", TagCategory::Crop)])).labels;
        assert_eq!(l, LabelSet::new(false, false));
    }

    #[test]
    fn lm_corpus_lines() {
        let a = RawDocument::from_paragraphs(
            "a",
            SourceKind::BsvXml,
            vec!["les pucerons sont présents".into(), "le seuil est atteint".into()],
        );
        let b = RawDocument::from_paragraphs(
            "b",
            SourceKind::BsvXml,
            vec!["   ".into(), "la rouille brune progresse".into()],
        );
        let lines = build_lm_corpus(&[a, b], &CleaningConfig::lm_corpus(), LmCorpusSource::XmlParagraphs).unwrap();
        assert_eq!(lines, vec!["les pucerons sont présents", "le seuil est atteint", "la rouille brune progresse"]);
        let empty = RawDocument::from_paragraphs("e", SourceKind::BsvXml, vec![]);
        assert!(matches!(
            build_lm_corpus(&[empty], &CleaningConfig::lm_corpus(), LmCorpusSource::XmlParagraphs),
            Err(BuildError::EmptyCorpus)
        ));
    }

    fn catalog_for(n: usize) -> (Vec<CleanedDocument>, TagCatalog) {
        let docs: Vec<_> = (0..n).map(|i| cleaned(&format!("doc{i:03}"), 40 + i % 300)).collect();
        let mut cat = TagCatalog::new();
        for (i, d) in docs.iter().enumerate() {
            let t = if i % 2 == 0 { tags(&[("pyrale", TagCategory::Bioagressor)]) } else { BTreeSet::new() };
            cat.insert(d.id.clone(), t);
        }
        (docs, cat)
    }

    #[test]
    fn topic_dataset_samples_exact_doc_count() {
        let (docs, cat) = catalog_for(250);
        let ds = build_topic_dataset(&docs, &cat, TopicParams { n_docs: 200, target_chunks: None, ..Default::default() }).unwrap();
        let ids: BTreeSet<_> = ds.manifest.doc_ids.iter().collect();
        assert_eq!(ids.len(), 200);
        assert!(ds.chunks.iter().all(|c| ids.contains(&c.doc_id)));
    }

    #[test]
    fn topic_dataset_is_deterministic_bytewise() {
        let (docs, cat) = catalog_for(250);
        let p = TopicParams { n_docs: 200, target_chunks: Some(150), seed: 9, ..Default::default() };
        let render = |ds: &TopicDataset| {
            let mut buf = Vec::new();
            write_examples_jsonl(&mut buf, &ds.chunks).unwrap();
            buf.extend(serde_json::to_vec(&ds.manifest).unwrap());
            buf
        };
        let a = build_topic_dataset(&docs, &cat, p).unwrap();
        let b = build_topic_dataset(&docs, &cat, p).unwrap();
        assert_eq!(render(&a), render(&b));
        assert_eq!(a.chunks.len(), 150);
        let c = build_topic_dataset(&docs, &cat, TopicParams { seed: 10, ..p }).unwrap();
        assert_ne!(render(&a), render(&c));
    }

    #[test]
    fn topic_dataset_insufficient_docs() {
        let (docs, cat) = catalog_for(100);
        assert!(matches!(
            build_topic_dataset(&docs, &cat, TopicParams::default()),
            Err(BuildError::InsufficientDocs { needed: 200, available: 100 })
        ));
    }

    #[test]
    fn risk_annotations_parse_and_validate() {
        let ok = r#"{"sentence":"le seuil de nuisibilité est atteint","bioagressor":true,"disease":false}"#;
        let anns = parse_risk_annotations(ok.as_bytes()).unwrap();
        assert_eq!(anns[0].labels, LabelSet::new(true, false));

        let missing = format!("{ok}\n{}", r#"{"sentence":"x","bioagressor":true}"#);
        match parse_risk_annotations(missing.as_bytes()) {
            Err(BuildError::Schema { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let not_bool = r#"{"sentence":"x","bioagressor":"yes","disease":false}"#;
        assert!(parse_risk_annotations(not_bool.as_bytes()).is_err());
    }

    #[test]
    fn risk_fixture_has_400_sentences() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/risk_sentences.jsonl");
        let anns = load_risk_annotations(&path).unwrap();
        assert_eq!(anns.len(), 400);
        let ex = risk_examples(&anns);
        assert!(ex.iter().all(|e| !e.text.is_empty()));
    }

    fn examples_over(n_docs: usize) -> Vec<Chunk> {
        (0..n_docs)
            .flat_map(|d| chunk_document(&cleaned(&format!("doc{d}"), 30), ChunkParams::default(), 1))
            .collect()
    }

    #[test]
    fn split_ten_docs() {
        let ex = examples_over(10);
        let s = split_dataset(&ex, 0.8, 42).unwrap();
        assert_eq!(s.train_docs.len(), 8);
        assert_eq!(s.test_docs.len(), 2);
        assert_eq!(s.train.len() + s.test.len(), ex.len());
        assert_eq!(split_dataset(&ex, 0.8, 42).unwrap(), s);
    }

    #[test]
    fn split_single_doc_is_degenerate() {
        let ex = chunk_document(&cleaned("only", 400), ChunkParams::default(), 1);
        assert!(ex.len() > 1);
        assert!(matches!(split_dataset(&ex, 0.8, 0), Err(BuildError::DegenerateSplit { docs: 1 })));
        assert!(matches!(split_dataset(&examples_over(3), 1.0, 0), Err(BuildError::InvalidParams(_))));
    }

    proptest! {
        #[test]
        fn chunks_partition_words(n in 0usize..2000, seed in any::<u64>()) {
            let doc = cleaned("p", n);
            let chunks = chunk_document(&doc, ChunkParams::default(), seed);
            let rejoined: Vec<&str> = chunks.iter().flat_map(|c| c.text.split(' ')).filter(|w| !w.is_empty()).collect();
            let source: Vec<&str> = doc.text.split_whitespace().collect();
            if n < 5 {
                prop_assert!(chunks.is_empty());
            } else {
                prop_assert_eq!(rejoined, source);
            }
            for c in &chunks {
                prop_assert_eq!(c.word_count, c.text.split_whitespace().count());
                prop_assert!(c.word_count >= 5);
                prop_assert!(c.word_count <= 256 || (c.merged_remainder && c.word_count <= 260));
            }
        }

        #[test]
        fn split_hygiene(n_docs in 2usize..40, ratio in 0.05f64..0.95, seed in any::<u64>()) {
            let ex = examples_over(n_docs);
            let s = split_dataset(&ex, ratio, seed).unwrap();
            let train: BTreeSet<_> = s.train.iter().map(|c| &c.doc_id).collect();
            let test: BTreeSet<_> = s.test.iter().map(|c| &c.doc_id).collect();
            prop_assert!(train.is_disjoint(&test));
            prop_assert_eq!(s.train.len() + s.test.len(), ex.len());
            let expected = (ratio * n_docs as f64).round() as i64;
            prop_assert!((s.train_docs.len() as i64 - expected).abs() <= 1);
        }
    }
}
