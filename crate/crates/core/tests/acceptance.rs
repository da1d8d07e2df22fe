//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the lines always print; any failure exits non-zero.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use phyto_core::clean::{
    clean_text, collapse_repeats, french_stopwords, remove_spaced_letter_runs, remove_stopwords, strip_punctuation,
    strip_urls_phones, CleaningConfig, RemovedStats,
};
use phyto_core::dataset::{build_topic_dataset, chunk_document, split_dataset, ChunkParams, LabelSet, TopicParams};
use phyto_core::harness::{
    decide, finetune_language_model, load_artifact, save_artifact, train_classifier, Backend, EmbeddingEncoder,
    OfflineEncoder, TrainingConfig,
};
use phyto_core::metrics::{evaluate, evaluate_predictions, AucAveraging, MetricsReport};
use phyto_core::synthetic::{generate, SyntheticParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use common::*;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn metric_oracle_equivalence() -> Outcome {
    const TOL: f64 = 1e-9;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for inst in 0..1000 {
        let n = rng.gen_range(1..=50);
        // coarse grid so ties are common
        let probs: Vec<[f64; 2]> =
            (0..n).map(|_| [rng.gen_range(0..=20) as f64 / 20.0, rng.gen_range(0..=20) as f64 / 20.0]).collect();
        let gold: Vec<LabelSet> = (0..n).map(|_| LabelSet::new(rng.gen_bool(0.4), rng.gen_bool(0.3))).collect();
        let threshold = rng.gen_range(1..=9) as f64 / 10.0;
        let r = evaluate_predictions(&probs, &gold, threshold, AucAveraging::SupportWeighted)
            .map_err(|e| format!("instance {inst}: {e}"))?;
        let mut supports = [0.0; 2];
        let mut sums = [0.0; 3];
        let (mut auc_sum, mut auc_w) = (0.0, 0.0);
        for (k, name) in ["bioagressor", "disease"].iter().enumerate() {
            let g = column(&gold, k);
            let pred: Vec<bool> = probs.iter().map(|p| p[k] >= threshold).collect();
            let scores: Vec<f64> = probs.iter().map(|p| p[k]).collect();
            let m = &r.per_label[*name];
            for (got, want, what) in [
                (m.accuracy, oracle_accuracy(&pred, &g), "accuracy"),
                (m.precision, oracle_precision(&pred, &g), "precision"),
                (m.recall, oracle_recall(&pred, &g), "recall"),
                (m.f1, oracle_f1(&pred, &g), "f1"),
            ] {
                ensure!(close(got, want, TOL), "instance {inst} {name} {what}: {got} vs oracle {want}");
            }
            let auc = oracle_auc(&scores, &g);
            ensure!(
                match (m.roc_auc, auc) {
                    (Some(a), Some(b)) => close(a, b, TOL),
                    (None, None) => true,
                    _ => false,
                },
                "instance {inst} {name} roc_auc: {:?} vs oracle {auc:?}",
                m.roc_auc
            );
            let s = g.iter().filter(|x| **x).count() as f64;
            supports[k] = s;
            sums[0] += s * oracle_precision(&pred, &g);
            sums[1] += s * oracle_recall(&pred, &g);
            sums[2] += s * oracle_f1(&pred, &g);
            if let Some(a) = auc {
                auc_sum += s * a;
                auc_w += s;
            }
        }
        let total = supports[0] + supports[1];
        let w = |x: f64| if total == 0.0 { 0.0 } else { x / total };
        let wr = &r.weighted;
        for (got, want, what) in
            [(wr.precision, w(sums[0]), "precision"), (wr.recall, w(sums[1]), "recall"), (wr.f1, w(sums[2]), "f1")]
        {
            ensure!(close(got, want, TOL), "instance {inst} weighted {what}: {got} vs oracle {want}");
        }
        let want_auc = (auc_w > 0.0).then(|| auc_sum / auc_w);
        ensure!(
            match (wr.roc_auc, want_auc) {
                (Some(a), Some(b)) => close(a, b, TOL),
                (None, None) => true,
                _ => false,
            },
            "instance {inst} weighted roc_auc: {:?} vs oracle {want_auc:?}",
            wr.roc_auc
        );
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?} (limit 10 s)");
    Ok(format!("1000 instances match oracles within 1e-9 in {elapsed:.2?}"))
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct GoldenRecord {
    id: String,
    cleaned: String,
    removed: RemovedStats,
}

fn clean_all(cfg: &CleaningConfig) -> Vec<GoldenRecord> {
    cleaning_fixtures()
        .into_iter()
        .map(|(id, text)| {
            let (cleaned, removed) = clean_text(&text, cfg);
            GoldenRecord { id, cleaned, removed }
        })
        .collect()
}

fn cleaning_suite() -> Outcome {
    let cfg = CleaningConfig::classification();
    let stop = french_stopwords();
    let fixtures = cleaning_fixtures();
    ensure!(fixtures.len() == 100, "expected 100 fixtures, found {}", fixtures.len());
    let out = clean_all(&cfg);
    for ((id, raw), rec) in fixtures.iter().zip(&out) {
        let c = &rec.cleaned;
        ensure!(clean_text(c, &cfg).0 == *c, "{id}: cleaning is not idempotent");
        ensure!(c.chars().count() <= raw.chars().count(), "{id}: cleaned text is longer than input");
        for (rule, f) in [
            ("urls/phones", strip_urls_phones as fn(&str) -> String),
            ("spaced letters", remove_spaced_letter_runs),
            ("repeats", collapse_repeats),
            ("punctuation", strip_punctuation),
        ] {
            ensure!(f(c) == *c, "{id}: {rule} rule still fires on cleaned text");
        }
        ensure!(remove_stopwords(c, &stop) == *c, "{id}: stopwords remain");
        for line in c.lines() {
            ensure!(line.split_whitespace().count() >= 3, "{id}: line {line:?} has fewer than 3 words");
        }
    }
    let get = |id: &str| &out.iter().find(|r| r.id == id).unwrap().cleaned;
    let header = get("001_spaced_header");
    ensure!(!header.contains("B U L") && !header.contains("S A N T E"), "vertical header survives: {header:?}");
    let table = get("002_broken_table");
    ensure!(table.lines().count() == 2, "broken table rows survive: {table:?}");
    ensure!(!table.lines().any(|l| l.starts_with("colza") || l.starts_with("stade")), "table cells survive: {table:?}");

    let golden_path = fixture_dir().join("cleaning/golden.jsonl");
    if std::env::var_os("PHYTO_BLESS").is_some() {
        let body: String = out.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
        std::fs::write(&golden_path, body).map_err(|e| e.to_string())?;
    }
    let golden: Vec<GoldenRecord> = std::fs::read_to_string(&golden_path)
        .map_err(|e| format!("{}: {e}", golden_path.display()))?
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    ensure!(golden == out, "cleaned output differs from golden.jsonl");
    ensure!(clean_all(&cfg) == out, "second run differs from first");
    Ok("100 fixtures idempotent, sound, shrinking; golden stable".into())
}

fn chunker_partition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = ChunkParams::default();
    let (mut n_chunks, mut merged) = (0, 0);
    for i in 0..200 {
        let n_words = if i < 10 { i } else { rng.gen_range(0..=2000) };
        let doc = cleaned_doc(&format!("doc{i}"), n_words, &mut rng);
        let chunks = chunk_document(&doc, params, rng.gen());
        if n_words < params.min_words {
            ensure!(chunks.is_empty(), "doc{i} with {n_words} words gave {} chunks", chunks.len());
            continue;
        }
        let joined: Vec<&str> = chunks.iter().flat_map(|c| c.text.split_whitespace()).collect();
        let source: Vec<&str> = doc.text.split_whitespace().collect();
        ensure!(joined == source, "doc{i}: chunks do not concatenate to the source");
        for c in &chunks {
            ensure!(c.word_count == c.text.split_whitespace().count(), "{}: word_count mismatch", c.chunk_id);
            if c.merged_remainder {
                merged += 1;
                ensure!(
                    c.word_count > params.max_words && c.word_count < params.max_words + params.min_words,
                    "{}: flagged merge of {} words",
                    c.chunk_id,
                    c.word_count
                );
            } else {
                ensure!(
                    (params.min_words..=params.max_words).contains(&c.word_count),
                    "{}: {} words outside [5, 256]",
                    c.chunk_id,
                    c.word_count
                );
            }
        }
        n_chunks += chunks.len();
    }
    Ok(format!("200 documents, {n_chunks} chunks, {merged} flagged remainder merges"))
}

struct SyntheticRun {
    report: MetricsReport,
    best_epoch: usize,
    elapsed: Duration,
}

fn synthetic_run(seed: u64) -> Result<SyntheticRun, String> {
    let start = Instant::now();
    let corpus = generate(SyntheticParams { n_docs: 500, seed, ..Default::default() });
    let cleaned: Vec<_> = corpus
        .docs
        .iter()
        .map(|d| phyto_core::clean::clean_document(d, &CleaningConfig::classification()))
        .collect();
    let ds = build_topic_dataset(&cleaned, &corpus.catalog, TopicParams { n_docs: 500, seed, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let split = split_dataset(&ds.chunks, 0.8, seed).map_err(|e| e.to_string())?;
    let cfg = TrainingConfig { seed, ..Default::default() };
    let backend = Backend::Offline(OfflineEncoder::default());
    let (artifact, run) = train_classifier(&backend, &split, &cfg).map_err(|e| e.to_string())?;
    let report = evaluate(&artifact, &split.test, cfg.threshold, AucAveraging::SupportWeighted)
        .map_err(|e| e.to_string())?;
    Ok(SyntheticRun { report, best_epoch: run.best_epoch, elapsed: start.elapsed() })
}

type Criterion = (&'static str, fn() -> Outcome);

fn synthetic_reproduction() -> Outcome {
    let cfg = TrainingConfig::default();
    ensure!(
        cfg.batch_size == 8 && cfg.clf_learning_rate == 2e-5 && cfg.threshold == 0.5,
        "defaults drifted: {cfg:?}"
    );
    let a = synthetic_run(0)?;
    let b = synthetic_run(0)?;
    ensure!(a.report == b.report && a.best_epoch == b.best_epoch, "two runs with seed 0 differ");
    let w = &a.report.weighted;
    let auc = w.roc_auc.ok_or("weighted roc_auc undefined")?;
    ensure!(a.elapsed < Duration::from_secs(120), "took {:?} (limit 120 s)", a.elapsed);
    ensure!(w.f1 >= 0.90 && auc >= 0.95, "weighted F1 {:.4} (need ≥ 0.90), ROC-AUC {auc:.4} (need ≥ 0.95)", w.f1);
    Ok(format!(
        "weighted F1 {:.4} ≥ 0.90, ROC-AUC {auc:.4} ≥ 0.95, {} test chunks, {:.2?}, deterministic",
        w.f1, a.report.n_examples, a.elapsed
    ))
}

fn threshold_behavior() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut probs: Vec<[f64; 2]> = (0..200).map(|_| [rng.gen(), rng.gen()]).collect();
    probs.extend([[0.5, 0.5], [0.4999999, 0.5000001], [0.1, 0.9], [0.0, 1.0]]);
    for p in &probs {
        let mut prev: Option<LabelSet> = None;
        for step in 1..=9 {
            let t = step as f64 / 10.0;
            let d = decide(*p, t);
            if let Some(pr) = prev {
                ensure!(
                    (!d.bioagressor || pr.bioagressor) && (!d.disease || pr.disease),
                    "{p:?}: threshold {t} adds a label"
                );
            }
            prev = Some(d);
        }
        let at_half = decide(*p, 0.5);
        ensure!(at_half == LabelSet::new(p[0] >= 0.5, p[1] >= 0.5), "{p:?}: decision at 0.5 is not p ≥ 0.5");
    }
    Ok(format!("{} probability pairs monotone over 0.1..0.9; 0.5 decides p ≥ 0.5", probs.len()))
}

fn harness_invariants() -> Outcome {
    // zero-epoch identity, language-model stage
    let enc = Backend::Embedding(EmbeddingEncoder::init(256, 16, 1, 256, 1));
    let lines: Vec<String> = (0..20).map(|i| format!("les pucerons colonisent la parcelle {i}")).collect();
    let lm_cfg = TrainingConfig { lm_epochs: 0, ..TrainingConfig::lm_stage() };
    let (tuned, _) = finetune_language_model(&enc, &lines, &lm_cfg).map_err(|e| e.to_string())?;
    ensure!(tuned == enc, "lm_epochs = 0 changed the encoder");

    let corpus = generate(SyntheticParams { n_docs: 60, seed: 9, ..Default::default() });
    let cleaned: Vec<_> = corpus
        .docs
        .iter()
        .map(|d| phyto_core::clean::clean_document(d, &CleaningConfig::classification()))
        .collect();
    let ds = build_topic_dataset(&cleaned, &corpus.catalog, TopicParams { n_docs: 60, seed: 9, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let split = split_dataset(&ds.chunks, 0.8, 9).map_err(|e| e.to_string())?;
    let backend = Backend::Offline(OfflineEncoder::default());

    // zero-epoch identity, classification stage
    let zero = TrainingConfig { clf_epochs: 0, ..Default::default() };
    let (art0, rep0) = train_classifier(&backend, &split, &zero).map_err(|e| e.to_string())?;
    ensure!(rep0.best_epoch == 0, "clf_epochs = 0 gave best_epoch {}", rep0.best_epoch);
    ensure!(art0.head().weights().iter().all(|w| *w == 0.0) && art0.head().bias() == [0.0; 2], "head moved");

    let cfg = TrainingConfig { seed: 9, ..Default::default() };
    let (art, rep) = train_classifier(&backend, &split, &cfg).map_err(|e| e.to_string())?;
    let max = rep.per_epoch_val_f1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ensure!(rep.best_f1 == max && art.best_f1 == max, "best_f1 {} vs max per-epoch {max}", rep.best_f1);

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    save_artifact(&art, dir.path()).map_err(|e| e.to_string())?;
    let back = load_artifact(dir.path()).map_err(|e| e.to_string())?;
    let batch: Vec<&str> = split.test.iter().chain(&split.train).take(32).map(|c| c.text.as_str()).collect();
    ensure!(batch.len() == 32, "fixture batch has {} examples", batch.len());
    for t in &batch {
        let (a, b) = (art.probabilities(t), back.probabilities(t));
        ensure!(a.map(f64::to_bits) == b.map(f64::to_bits), "round-trip changed probabilities {a:?} -> {b:?}");
        ensure!(art.predict(t) == back.predict(t), "round-trip changed decisions");
    }
    Ok(format!(
        "zero-epoch identity (both stages); best_f1 = max of {} epochs; 32-example round-trip bit-identical",
        rep.per_epoch_val_f1.len()
    ))
}

fn main() {
    let criteria: [Criterion; 6] = [
        ("1 metric oracle equivalence", metric_oracle_equivalence),
        ("2 cleaning suite", cleaning_suite),
        ("3 chunker partition", chunker_partition),
        ("4 end-to-end synthetic reproduction", synthetic_reproduction),
        ("5 threshold behavior", threshold_behavior),
        ("6 harness invariants", harness_invariants),
    ];
    let mut failed = BTreeSet::new();
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                println!("FAIL criterion {name}: {why}");
                failed.insert(name);
            }
        }
    }
    println!(
        "SKIP criterion 7 full-scale reproduction: needs a pretrained French encoder and the full bulletin corpus; \
         optional stretch target (weighted F1 0.801 ± 0.05, ROC-AUC 0.911 ± 0.05)"
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
