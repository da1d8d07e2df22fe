#![allow(dead_code)]

use std::path::PathBuf;

use phyto_core::clean::CleanedDocument;
use phyto_core::dataset::LabelSet;
use phyto_core::ingest::SourceKind;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

const PIECES: [&str; 24] = [
    "B U L L E T I N",
    "S A N T E   V E G E T A L",
    "https://bsv.exemple.fr/doc?id=7",
    "www.agri.fr",
    "06 12 34 56 78",
    "+33 4 67 00 11 22",
    "!!!",
    "...",
    "--",
    "«",
    "»",
    "l'apparition",
    "les",
    "de",
    "des",
    "pucerons",
    "colza",
    "rouille",
    "parcelles",
    "seuil",
    "porte-greffe",
    "n°12",
    "12",
    "stade",
];

/// Six hand-written bulletins plus generated ones, 100 in total, sorted by id.
pub fn cleaning_fixtures() -> Vec<(String, String)> {
    let dir = fixture_dir().join("cleaning");
    let mut docs: Vec<(String, String)> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .map(|p| (p.file_stem().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect();
    docs.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in docs.len()..100 {
        let n_lines = rng.gen_range(1..12);
        let lines: Vec<String> = (0..n_lines)
            .map(|_| {
                let n = rng.gen_range(0..14);
                (0..n).map(|_| *PIECES.choose(&mut rng).unwrap()).collect::<Vec<_>>().join(" ")
            })
            .collect();
        docs.push((format!("{:03}_generated", i + 1), lines.join("\n")));
    }
    docs
}

/// A cleaned document of `n_words` single-line words.
pub fn cleaned_doc(id: &str, n_words: usize, rng: &mut ChaCha8Rng) -> CleanedDocument {
    let mut text = String::new();
    for i in 0..n_words {
        if i > 0 {
            text.push(if rng.gen_bool(0.05) { '\n' } else { ' ' });
        }
        text.push_str(&format!("w{}", rng.gen_range(0..500)));
    }
    CleanedDocument {
        id: id.to_owned(),
        source_kind: SourceKind::BsvOcr,
        word_count: n_words,
        text,
        tags: Default::default(),
        removed_stats: Default::default(),
        empty: n_words == 0,
    }
}

// Brute-force metric definitions, written independently of the library.

pub fn counts(pred: &[bool], gold: &[bool]) -> (f64, f64, f64, f64) {
    let (mut tp, mut fp, mut fn_, mut tn) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..pred.len() {
        if pred[i] && gold[i] {
            tp += 1.0;
        } else if pred[i] {
            fp += 1.0;
        } else if gold[i] {
            fn_ += 1.0;
        } else {
            tn += 1.0;
        }
    }
    (tp, fp, fn_, tn)
}

pub fn oracle_precision(pred: &[bool], gold: &[bool]) -> f64 {
    let (tp, fp, _, _) = counts(pred, gold);
    if tp + fp == 0.0 {
        0.0
    } else {
        tp / (tp + fp)
    }
}

pub fn oracle_recall(pred: &[bool], gold: &[bool]) -> f64 {
    let (tp, _, fn_, _) = counts(pred, gold);
    if tp + fn_ == 0.0 {
        0.0
    } else {
        tp / (tp + fn_)
    }
}

pub fn oracle_f1(pred: &[bool], gold: &[bool]) -> f64 {
    let (p, r) = (oracle_precision(pred, gold), oracle_recall(pred, gold));
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn oracle_accuracy(pred: &[bool], gold: &[bool]) -> f64 {
    pred.iter().zip(gold).filter(|(p, g)| p == g).count() as f64 / pred.len() as f64
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half, by enumerating every pair.
pub fn oracle_auc(scores: &[f64], gold: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if gold[i] && !gold[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

pub fn column(sets: &[LabelSet], k: usize) -> Vec<bool> {
    sets.iter().map(|s| if k == 0 { s.bioagressor } else { s.disease }).collect()
}
