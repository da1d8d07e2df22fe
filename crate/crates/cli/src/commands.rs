//! One function per subcommand. Each resolves and loads its inputs before
//! opening a run, so validation failures create nothing on disk.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use phyto_core::clean::{clean_corpus, CleanedDocument, RemovedStats};
use phyto_core::dataset::{
    build_lm_corpus, build_topic_dataset, load_risk_annotations, read_examples_jsonl, risk_examples, split_dataset,
    write_examples_jsonl, Chunk, DatasetSplit, Label, SplitManifest,
};
use phyto_core::harness::{
    build_backend, finetune_language_model, load_artifact, save_artifact, train_classifier, Backend, BackendSpec,
    ModelArtifact, PredictionResult, Stage, TrainingConfig,
};
use phyto_core::ingest::{
    attach_tags, load_plaintext_bulletin, load_tag_catalog, load_thesaurus, load_xml_bulletin_with,
    read_corpus_jsonl, write_corpus_jsonl, RawDocument, SourceKind,
};
use phyto_core::metrics::evaluate;
use phyto_core::social::{
    build_keyword_filter, classify_tweets_from_dir, filter_tweets, parse_tweets_jsonl, write_tweet_predictions_jsonl,
    TweetRecord,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{RunConfig, Task};
use crate::error::CliError;
use crate::run::{upstream_file, RunBuilder};

/// Per-invocation inputs beyond the config.
#[derive(Debug, Default)]
pub struct Context {
    pub cfg: RunConfig,
    /// Overrides the primary input (see each command).
    pub input: Option<PathBuf>,
    /// Overrides the artifact directory for evaluate, predict and classify-tweets.
    pub artifact: Option<PathBuf>,
    /// Texts for `predict`.
    pub texts: Vec<String>,
}

/// A committed run. `failure` is set when the run was committed but the
/// command still reports an error (per-record failures).
#[derive(Debug)]
pub struct Outcome {
    pub run_dir: PathBuf,
    pub summary: serde_json::Value,
    pub failure: Option<CliError>,
}

impl Outcome {
    fn ok(run_dir: PathBuf, summary: serde_json::Value) -> Self {
        Self { run_dir, summary, failure: None }
    }
}

fn require(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::missing(path, format!("{what} not found")))
    }
}

fn open(path: &Path) -> Result<BufReader<fs::File>, CliError> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::op(format!("cannot open {}: {e}", path.display())))
}

fn write_jsonl<T: Serialize>(w: &mut dyn Write, items: &[T]) -> std::io::Result<()> {
    for it in items {
        serde_json::to_writer(&mut *w, it)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(CliError::op)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| CliError::Schema(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

fn out_root(ctx: &Context) -> &Path {
    &ctx.cfg.out_dir
}

/// Backend for `stage`; a `pretrained:` checkpoint must exist.
fn backend_for(ctx: &Context, stage: Stage) -> Result<(Backend, TrainingConfig, Option<PathBuf>), CliError> {
    let cfg = TrainingConfig { stage, ..ctx.cfg.training.clone() };
    let spec = ctx.cfg.backend_spec()?;
    let checkpoint = match &spec {
        BackendSpec::Pretrained(p) => {
            require(p, "encoder checkpoint")?;
            Some(p.clone())
        }
        _ => None,
    };
    let backend = build_backend(&spec, &cfg, ctx.cfg.offline_dim, ctx.cfg.offline_seed).map_err(CliError::op)?;
    Ok((backend, cfg, checkpoint))
}

fn resolve_artifact(ctx: &Context) -> Result<PathBuf, CliError> {
    let dir = match &ctx.artifact {
        Some(d) => d.clone(),
        None => upstream_file(out_root(ctx), "train", None, "artifact")?,
    };
    require(&dir.join("artifact.json"), "model artifact")?;
    Ok(dir)
}

fn load_model(dir: &Path) -> Result<ModelArtifact, CliError> {
    load_artifact(dir).map_err(CliError::op)
}

/// `ingest`: bulletins directory (or `--input DIR`) to `corpus.jsonl`, with
/// catalog tags attached when the tag file exists.
pub fn ingest(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = &ctx.cfg;
    let dir = ctx.input.clone().unwrap_or_else(|| cfg.data_path(&cfg.paths.bulletins));
    require(&dir, "bulletins directory")?;
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| CliError::op(format!("cannot list {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && matches!(p.extension().and_then(|e| e.to_str()), Some("txt" | "xml")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::op(format!("no .txt or .xml bulletins in {}", dir.display())));
    }
    let mut ids = BTreeSet::new();
    for f in &files {
        let id = f.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        if !ids.insert(id.clone()) {
            return Err(CliError::Schema(format!("duplicate document id {id:?} in {}", dir.display())));
        }
    }
    let mut docs: Vec<RawDocument> = files
        .par_iter()
        .map(|p| {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            match p.extension().and_then(|e| e.to_str()) {
                Some("xml") => load_xml_bulletin_with(p, &id, &cfg.xml),
                _ => load_plaintext_bulletin(p, &id),
            }
        })
        .collect::<Result<_, _>>()?;
    let tags_path = cfg.data_path(&cfg.paths.tags);
    let tags_present = tags_path.exists();
    if tags_present {
        attach_tags(&mut docs, &load_tag_catalog(&tags_path)?);
    }

    let mut run = RunBuilder::start(out_root(ctx), "ingest")?;
    run.record_input(&dir)?;
    if tags_present {
        run.record_input(&tags_path)?;
    }
    run.write_with("corpus.jsonl", |w| write_corpus_jsonl(w, &docs))?;
    let count = |k: SourceKind| docs.iter().filter(|d| d.source_kind == k).count();
    let summary = json!({
        "n_docs": docs.len(),
        "n_xml": count(SourceKind::BsvXml),
        "n_ocr": count(SourceKind::BsvOcr),
        "n_empty": docs.iter().filter(|d| d.empty).count(),
        "n_tagged": docs.iter().filter(|d| !d.tags.is_empty()).count(),
        "tags_attached": tags_present,
    });
    run.write_json("ingest_summary.json", &summary)?;
    Ok(Outcome::ok(run.commit(cfg)?, summary))
}

fn load_corpus(ctx: &Context) -> Result<(PathBuf, Vec<RawDocument>), CliError> {
    let path = upstream_file(out_root(ctx), "ingest", ctx.input.as_deref(), "corpus.jsonl")?;
    let docs = read_corpus_jsonl(open(&path)?)?;
    Ok((path, docs))
}

/// `clean`: `cleaned.jsonl` plus `removed_stats.json`.
pub fn clean(ctx: &Context) -> Result<Outcome, CliError> {
    let (corpus_path, docs) = load_corpus(ctx)?;
    let cleaned = clean_corpus(&docs, &ctx.cfg.cleaning);
    let mut total = RemovedStats::default();
    for d in &cleaned {
        total += d.removed_stats;
    }
    let per_doc: BTreeMap<&str, RemovedStats> = cleaned.iter().map(|d| (d.id.as_str(), d.removed_stats)).collect();
    let summary = json!({
        "n_docs": cleaned.len(),
        "n_empty": cleaned.iter().filter(|d| d.empty).count(),
        "n_words": cleaned.iter().map(|d| d.word_count).sum::<usize>(),
        "removed": total,
    });

    let mut run = RunBuilder::start(out_root(ctx), "clean")?;
    run.record_input(&corpus_path)?;
    run.write_with("cleaned.jsonl", |w| write_jsonl(w, &cleaned))?;
    run.write_json("removed_stats.json", &json!({ "total": total, "per_doc": per_doc }))?;
    Ok(Outcome::ok(run.commit(&ctx.cfg)?, summary))
}

/// `build-lm-corpus`: one cleaned paragraph per line in `lm_corpus.txt`.
pub fn build_lm(ctx: &Context) -> Result<Outcome, CliError> {
    let (corpus_path, docs) = load_corpus(ctx)?;
    let section = &ctx.cfg.lm_corpus;
    let lines = build_lm_corpus(&docs, &section.cleaning, section.source)?;
    let summary = json!({
        "n_lines": lines.len(),
        "n_words": lines.iter().map(|l| l.split_whitespace().count()).sum::<usize>(),
        "source": section.source,
    });

    let mut run = RunBuilder::start(out_root(ctx), "build-lm-corpus")?;
    run.record_input(&corpus_path)?;
    run.write_with("lm_corpus.txt", |w| lines.iter().try_for_each(|l| writeln!(w, "{l}")))?;
    run.write_json("lm_corpus_summary.json", &summary)?;
    Ok(Outcome::ok(run.commit(&ctx.cfg)?, summary))
}

fn label_counts(examples: &[Chunk]) -> BTreeMap<&'static str, usize> {
    Label::ALL.iter().map(|l| (l.as_str(), examples.iter().filter(|c| c.labels.get(*l)).count())).collect()
}

/// `build-dataset`: topic chunks from the cleaned corpus and tag catalog, or
/// risk sentences from the annotation file; then a document-level split.
pub fn build_dataset(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = &ctx.cfg;
    let mut inputs = Vec::new();
    let (examples, dataset_manifest) = match cfg.dataset.task {
        Task::Topic => {
            let cleaned_path = upstream_file(out_root(ctx), "clean", ctx.input.as_deref(), "cleaned.jsonl")?;
            let tags_path = cfg.data_path(&cfg.paths.tags);
            require(&tags_path, "tag catalog")?;
            let cleaned: Vec<CleanedDocument> = read_jsonl(&cleaned_path)?;
            let catalog = load_tag_catalog(&tags_path)?;
            let ds = build_topic_dataset(&cleaned, &catalog, cfg.topic_params())?;
            inputs.extend([cleaned_path, tags_path]);
            let manifest = serde_json::to_value(&ds.manifest).map_err(CliError::op)?;
            (ds.chunks, manifest)
        }
        Task::Risk => {
            let path = ctx.input.clone().unwrap_or_else(|| cfg.data_path(&cfg.paths.risk_annotations));
            require(&path, "risk annotation file")?;
            let examples = risk_examples(&load_risk_annotations(&path)?);
            inputs.push(path);
            let manifest = json!({
                "task": "risk",
                "n_examples": examples.len(),
                "label_counts": label_counts(&examples),
                "rule_versions": phyto_core::dataset::rule_versions(),
            });
            (examples, manifest)
        }
    };
    let split = split_dataset(&examples, cfg.dataset.split_ratio, cfg.seed)?;
    let summary = json!({
        "task": cfg.dataset.task,
        "n_examples": examples.len(),
        "n_train": split.train.len(),
        "n_test": split.test.len(),
        "n_train_docs": split.train_docs.len(),
        "n_test_docs": split.test_docs.len(),
        "train_label_counts": label_counts(&split.train),
        "test_label_counts": label_counts(&split.test),
    });

    let mut run = RunBuilder::start(out_root(ctx), "build-dataset")?;
    for p in &inputs {
        run.record_input(p)?;
    }
    run.write_with("train.jsonl", |w| write_examples_jsonl(w, &split.train))?;
    run.write_with("test.jsonl", |w| write_examples_jsonl(w, &split.test))?;
    run.write_json("split.json", &split.manifest())?;
    run.write_json("dataset_manifest.json", &dataset_manifest)?;
    Ok(Outcome::ok(run.commit(cfg)?, summary))
}

/// `finetune-lm`: masked-token tuning of an embedding encoder; writes the
/// tuned checkpoint `encoder.bin` and `lm_report.json`.
pub fn finetune_lm(ctx: &Context) -> Result<Outcome, CliError> {
    let corpus_path = upstream_file(out_root(ctx), "build-lm-corpus", ctx.input.as_deref(), "lm_corpus.txt")?;
    let lines: Vec<String> = open(&corpus_path)?.lines().collect::<Result<_, _>>().map_err(CliError::op)?;
    let (backend, cfg, checkpoint) = backend_for(ctx, Stage::LmFinetune)?;
    let (tuned, report) = finetune_language_model(&backend, &lines, &cfg)?;
    let Backend::Embedding(enc) = &tuned else {
        return Err(CliError::op("fine-tuning returned a non-embedding backend"));
    };
    let summary = serde_json::to_value(&report).map_err(CliError::op)?;

    let mut run = RunBuilder::start(out_root(ctx), "finetune-lm")?;
    run.record_input(&corpus_path)?;
    if let Some(p) = &checkpoint {
        run.record_input(p)?;
    }
    run.write_bytes("encoder.bin", &enc.to_bytes())?;
    run.write_json("lm_report.json", &report)?;
    Ok(Outcome::ok(run.commit(&ctx.cfg)?, summary))
}

fn load_split(ctx: &Context) -> Result<(Vec<PathBuf>, DatasetSplit), CliError> {
    let root = out_root(ctx);
    let input = ctx.input.as_deref();
    let train_p = upstream_file(root, "build-dataset", input, "train.jsonl")?;
    let test_p = upstream_file(root, "build-dataset", input, "test.jsonl")?;
    let split_p = upstream_file(root, "build-dataset", input, "split.json")?;
    let manifest: SplitManifest = read_json(&split_p)?;
    let train = read_examples_jsonl(open(&train_p)?)?;
    let test = read_examples_jsonl(open(&test_p)?)?;
    Ok((vec![train_p, test_p, split_p], DatasetSplit::from_parts(manifest, train, test)))
}

/// `train`: classification head on the build-dataset split; writes
/// `artifact/` and `run_report.json`.
pub fn train(ctx: &Context) -> Result<Outcome, CliError> {
    let (inputs, split) = load_split(ctx)?;
    let (backend, cfg, checkpoint) = backend_for(ctx, Stage::Classify)?;
    let (artifact, report) = train_classifier(&backend, &split, &cfg)?;
    let summary = json!({
        "best_epoch": report.best_epoch,
        "best_f1": report.best_f1,
        "per_epoch_val_f1": report.per_epoch_val_f1,
        "n_fit_examples": report.n_fit_examples,
        "n_validation_examples": report.n_validation_examples,
    });

    let mut run = RunBuilder::start(out_root(ctx), "train")?;
    for p in inputs.iter().chain(&checkpoint) {
        run.record_input(p)?;
    }
    save_artifact(&artifact, &run.path("artifact")).map_err(CliError::op)?;
    run.write_json("run_report.json", &report)?;
    Ok(Outcome::ok(run.commit(&ctx.cfg)?, summary))
}

/// `evaluate`: metrics of the trained artifact on the held-out split.
pub fn evaluate_cmd(ctx: &Context) -> Result<Outcome, CliError> {
    let artifact_dir = resolve_artifact(ctx)?;
    let test_p = upstream_file(out_root(ctx), "build-dataset", ctx.input.as_deref(), "test.jsonl")?;
    let test = read_examples_jsonl(open(&test_p)?)?;
    let artifact = load_model(&artifact_dir)?;
    let report = evaluate(&artifact, &test, ctx.cfg.training.threshold, ctx.cfg.evaluation.auc_averaging)
        .map_err(CliError::op)?;
    let summary = serde_json::to_value(&report.weighted).map_err(CliError::op)?;

    let mut run = RunBuilder::start(out_root(ctx), "evaluate")?;
    run.record_input(&artifact_dir)?;
    run.record_input(&test_p)?;
    run.write_json("metrics.json", &report)?;
    run.write_bytes("metrics_table.txt", report.to_table().as_bytes())?;
    Ok(Outcome::ok(run.commit(&ctx.cfg)?, summary))
}

#[derive(Serialize)]
struct TextPrediction<'a> {
    index: usize,
    text: &'a str,
    #[serde(flatten)]
    result: PredictionResult,
    decided_labels: Vec<&'static str>,
}

/// `predict`: texts from `--text` (repeatable) or `--input FILE` (one text
/// per line) to `predictions.jsonl`.
pub fn predict(ctx: &Context) -> Result<Outcome, CliError> {
    let artifact_dir = resolve_artifact(ctx)?;
    let texts: Vec<String> = match (&ctx.input, ctx.texts.is_empty()) {
        (Some(p), true) => {
            require(p, "text input file")?;
            open(p)?.lines().collect::<Result<_, _>>().map_err(CliError::op)?
        }
        (None, false) => ctx.texts.clone(),
        (Some(_), false) => return Err(CliError::Schema("pass either --text or --input, not both".into())),
        (None, true) => return Err(CliError::Schema("predict needs --text or --input".into())),
    };
    let artifact = load_model(&artifact_dir)?;
    let t = ctx.cfg.training.threshold;
    let preds: Vec<TextPrediction> = texts
        .par_iter()
        .enumerate()
        .map(|(index, text)| {
            let result = artifact.predict_with(text, t);
            let decided_labels = result.decided_labels();
            TextPrediction { index, text, result, decided_labels }
        })
        .collect();
    let summary = json!({ "n_texts": preds.len(), "threshold": t });

    let mut run = RunBuilder::start(out_root(ctx), "predict")?;
    run.record_input(&artifact_dir)?;
    if let Some(p) = &ctx.input {
        run.record_input(p)?;
    }
    run.write_with("predictions.jsonl", |w| write_jsonl(w, &preds))?;
    Ok(Outcome::ok(run.commit(&ctx.cfg)?, summary))
}

/// `filter-tweets`: keep tweets mentioning a thesaurus concept or catalog
/// tag; writes `filtered.jsonl` with the matched keywords.
pub fn filter_tweets_cmd(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = &ctx.cfg;
    let tweets_p = ctx.input.clone().unwrap_or_else(|| cfg.data_path(&cfg.paths.tweets));
    let thesaurus_p = cfg.data_path(&cfg.paths.thesaurus);
    let tags_p = cfg.data_path(&cfg.paths.tags);
    require(&tweets_p, "tweet file")?;
    require(&thesaurus_p, "thesaurus")?;
    require(&tags_p, "tag catalog")?;
    let tweets = parse_tweets_jsonl(open(&tweets_p)?)?;
    let filter = build_keyword_filter(&load_thesaurus(&thesaurus_p)?, &load_tag_catalog(&tags_p)?)?;
    let kept = filter_tweets(&tweets, &filter);
    let summary = json!({ "n_input": tweets.len(), "n_kept": kept.len() });

    let mut run = RunBuilder::start(out_root(ctx), "filter-tweets")?;
    for p in [&tweets_p, &thesaurus_p, &tags_p] {
        run.record_input(p)?;
    }
    run.write_with("filtered.jsonl", |w| write_jsonl(w, &kept))?;
    run.write_json("filter_summary.json", &summary)?;
    Ok(Outcome::ok(run.commit(cfg)?, summary))
}

/// `classify-tweets`: classify the filtered tweets. Per-record failures do
/// not stop the batch; the run is committed with `error_summary.json` and
/// the command then exits with an operation error.
pub fn classify_tweets_cmd(ctx: &Context) -> Result<Outcome, CliError> {
    let artifact_dir = resolve_artifact(ctx)?;
    let tweets_p = upstream_file(out_root(ctx), "filter-tweets", ctx.input.as_deref(), "filtered.jsonl")?;
    let tweets: Vec<TweetRecord> = read_jsonl(&tweets_p)?;
    let batch = classify_tweets_from_dir(&tweets, &artifact_dir, ctx.cfg.training.threshold);
    let summary = serde_json::to_value(&batch.summary).map_err(CliError::op)?;

    let mut run = RunBuilder::start(out_root(ctx), "classify-tweets")?;
    run.record_input(&artifact_dir)?;
    run.record_input(&tweets_p)?;
    run.write_with("tweet_predictions.jsonl", |w| write_tweet_predictions_jsonl(w, &batch.predictions))?;
    run.write_json("error_summary.json", &batch.summary)?;
    let run_dir = run.commit(&ctx.cfg)?;
    let failure = (batch.summary.n_errors > 0).then(|| {
        CliError::op(format!("{} of {} tweets failed; see error_summary.json", batch.summary.n_errors, batch.summary.n_records))
    });
    Ok(Outcome { run_dir, summary, failure })
}
