//! Seeded synthetic bulletins whose tags are determined by planted pest and
//! disease vocabulary. Used for desk-scale end-to-end runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{RawDocument, SourceKind, TagCatalog, TagCategory, TagRef};

pub const BIOAGRESSOR_TERMS: [&str; 3] = ["puceron", "pyrale", "altise"];
pub const DISEASE_TERMS: [&str; 3] = ["mildiou", "rouille", "septoriose"];
const CROPS: [&str; 6] = ["colza", "blé", "maïs", "vigne", "orge", "tournesol"];

const SUBJECTS: [&str; 10] = [
    "réseau", "parcelles", "observateurs", "stade", "semis", "cultures", "conditions", "surveillance", "relevés",
    "secteur",
];
const VERBS: [&str; 8] = [
    "indiquent", "montrent", "signalent", "confirment", "restent", "évoluent", "progressent", "atteignent",
];
const OBJECTS: [&str; 14] = [
    "températures", "précipitations", "feuilles", "épis", "tiges", "boutons", "floraison", "levée", "humidité",
    "semaine", "département", "plateau", "vallée", "rotation",
];
const MODIFIERS: [&str; 10] = [
    "douces", "fraîches", "régulières", "hétérogènes", "avancées", "tardives", "précoces", "stables", "variables",
    "favorables",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticParams {
    pub n_docs: usize,
    pub seed: u64,
    /// Line count range per document.
    pub min_lines: usize,
    pub max_lines: usize,
    /// Share of lines carrying a planted term in a tagged document.
    pub term_rate: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self { n_docs: 500, seed: 0, min_lines: 8, max_lines: 60, term_rate: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub docs: Vec<RawDocument>,
    pub catalog: TagCatalog,
}

fn filler_line(rng: &mut ChaCha8Rng, crop: &str) -> Vec<String> {
    let mut words = vec![
        SUBJECTS.choose(rng).unwrap().to_string(),
        VERBS.choose(rng).unwrap().to_string(),
        OBJECTS.choose(rng).unwrap().to_string(),
        MODIFIERS.choose(rng).unwrap().to_string(),
    ];
    for _ in 0..rng.gen_range(2..8) {
        let pool: &[&str] = if rng.gen_bool(0.5) { &OBJECTS } else { &SUBJECTS };
        words.push(pool.choose(rng).unwrap().to_string());
    }
    if rng.gen_bool(0.5) {
        words.push(crop.to_owned());
    }
    words
}

/// Each document independently carries the pest label and the disease label
/// with probability one half; a tagged document mentions at least one of its
/// planted terms and its tags list exactly the planted terms it mentions.
pub fn generate(params: SyntheticParams) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut docs = Vec::with_capacity(params.n_docs);
    let mut catalog = TagCatalog::new();
    for i in 0..params.n_docs {
        let id = format!("syn-{i:04}");
        let has_bio = rng.gen_bool(0.5);
        let has_dis = rng.gen_bool(0.5);
        let crop = *CROPS.choose(&mut rng).unwrap();
        let n_lines = rng.gen_range(params.min_lines..=params.max_lines);
        let mut used_bio = BTreeSet::new();
        let mut used_dis = BTreeSet::new();
        let mut lines = Vec::with_capacity(n_lines);
        for _ in 0..n_lines {
            let mut words = filler_line(&mut rng, crop);
            let mut plant = |on: bool, terms: &[&'static str], used: &mut BTreeSet<&'static str>, rng: &mut ChaCha8Rng| {
                if on && rng.gen_bool(params.term_rate) {
                    let t = *terms.choose(rng).unwrap();
                    used.insert(t);
                    let at = rng.gen_range(0..=words.len());
                    words.insert(at, t.to_owned());
                }
            };
            plant(has_bio, &BIOAGRESSOR_TERMS, &mut used_bio, &mut rng);
            plant(has_dis, &DISEASE_TERMS, &mut used_dis, &mut rng);
            lines.push(words.join(" "));
        }
        for (on, terms, used) in [(has_bio, &BIOAGRESSOR_TERMS, &mut used_bio), (has_dis, &DISEASE_TERMS, &mut used_dis)] {
            if on && used.is_empty() {
                let t = *terms.choose(&mut rng).unwrap();
                used.insert(t);
                lines[0] = format!("{t} {}", lines[0]);
            }
        }
        let mut tags: BTreeSet<TagRef> = BTreeSet::new();
        tags.extend(used_bio.iter().filter_map(|t| TagRef::new(t, TagCategory::Bioagressor)));
        tags.extend(used_dis.iter().filter_map(|t| TagRef::new(t, TagCategory::Disease)));
        tags.extend(TagRef::new(crop, TagCategory::Crop));
        catalog.insert(id.clone(), tags);
        docs.push(RawDocument::from_text(&id, SourceKind::BsvOcr, lines.join("\n")));
    }
    SyntheticCorpus { docs, catalog }
}

/// Short posts, half of them mentioning a planted term.
pub fn generate_tweets(n: usize, seed: u64) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let crop = *CROPS.choose(&mut rng).unwrap();
            let mut words = filler_line(&mut rng, crop);
            if i % 2 == 0 {
                let pool: &[&str] = if rng.gen_bool(0.5) { &BIOAGRESSOR_TERMS } else { &DISEASE_TERMS };
                words.insert(1, pool.choose(&mut rng).unwrap().to_string());
            }
            (format!("tw-{i:04}"), words.join(" "))
        })
        .collect()
}

/// Lay the corpus out as input files: `bulletins/<id>.txt`, `tags.csv`,
/// `thesaurus.txt` and `tweets.jsonl`.
pub fn write_corpus(corpus: &SyntheticCorpus, tweets: &[(String, String)], dir: &Path) -> io::Result<()> {
    let bulletins = dir.join("bulletins");
    fs::create_dir_all(&bulletins)?;
    for doc in &corpus.docs {
        fs::write(bulletins.join(format!("{}.txt", doc.id)), &doc.text)?;
    }
    let mut w = csv::Writer::from_path(dir.join("tags.csv"))?;
    w.write_record(["doc_id", "tag", "category"])?;
    for (id, tags) in &corpus.catalog {
        for t in tags {
            w.write_record([id.as_str(), t.name.as_str(), &t.category.to_string()])?;
        }
    }
    w.flush()?;
    let mut concepts: BTreeMap<&str, ()> = BTreeMap::new();
    for t in BIOAGRESSOR_TERMS.iter().chain(&DISEASE_TERMS) {
        concepts.insert(t, ());
    }
    let thesaurus: String = concepts.keys().map(|c| format!("{c}\n")).collect();
    fs::write(dir.join("thesaurus.txt"), thesaurus)?;
    let mut f = io::BufWriter::new(fs::File::create(dir.join("tweets.jsonl"))?);
    for (id, text) in tweets {
        serde_json::to_writer(&mut f, &serde_json::json!({ "id": id, "text": text }))?;
        f.write_all(b"\n")?;
    }
    f.flush()
}
