//! Python bindings. Structured results cross the boundary as plain dicts and
//! lists (serialized through JSON), so Python sees the same field names as
//! the files written by the command-line pipeline.

use std::path::PathBuf;

use phyto_core::clean::{self, CleanedDocument, CleaningConfig, RemovedStats};
use phyto_core::dataset::{chunk_document, split_dataset, Chunk, ChunkParams, LabelSet};
use phyto_core::harness::{
    self, build_backend, load_artifact, save_artifact, train_classifier, BackendSpec, EncoderBackend, ModelArtifact,
    TrainingConfig,
};
use phyto_core::ingest::SourceKind;
use phyto_core::metrics::{self, AucAveraging};
use phyto_core::social;
use phyto_core::synthetic::{self, SyntheticParams};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(phyto, PhytoError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    PhytoError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(value).map_err(err)?;
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

fn preset(name: &str) -> PyResult<CleaningConfig> {
    match name {
        "classification" => Ok(CleaningConfig::classification()),
        "lm_corpus" => Ok(CleaningConfig::lm_corpus()),
        "tweet" => Ok(CleaningConfig::tweet()),
        other => Err(PyValueError::new_err(format!(
            "unknown cleaning preset {other:?} (expected classification, lm_corpus or tweet)"
        ))),
    }
}

/// Clean `text` with a named preset. Returns `(cleaned, removed_stats)`.
#[pyfunction]
#[pyo3(signature = (text, preset_name = "classification"))]
fn clean_text(py: Python<'_>, text: &str, preset_name: &str) -> PyResult<(String, Py<PyAny>)> {
    let (cleaned, stats) = clean::clean_text(text, &preset(preset_name)?);
    Ok((cleaned, to_py(py, &stats)?))
}

/// Partition an already-cleaned text into chunks of `min_words..=max_words`
/// words. Returns a list of dicts with `text`, `word_count` and
/// `merged_remainder`.
#[pyfunction]
#[pyo3(signature = (doc_id, text, seed = 0, min_words = 5, max_words = 256))]
fn chunk_text(
    py: Python<'_>,
    doc_id: &str,
    text: &str,
    seed: u64,
    min_words: usize,
    max_words: usize,
) -> PyResult<Py<PyAny>> {
    if min_words == 0 || min_words > max_words {
        return Err(PyValueError::new_err(format!("chunk bounds [{min_words}, {max_words}]")));
    }
    let doc = CleanedDocument {
        id: doc_id.to_owned(),
        source_kind: SourceKind::BsvOcr,
        text: text.to_owned(),
        word_count: text.split_whitespace().count(),
        tags: Default::default(),
        removed_stats: RemovedStats::default(),
        empty: text.trim().is_empty(),
    };
    to_py(py, &chunk_document(&doc, ChunkParams { min_words, max_words }, seed))
}

/// ROC-AUC of `scores` against boolean `actuals`.
#[pyfunction]
fn roc_auc(scores: Vec<f64>, actuals: Vec<bool>) -> PyResult<f64> {
    metrics::roc_auc(&scores, &actuals).map_err(err)
}

fn parse_averaging(name: &str) -> PyResult<AucAveraging> {
    serde_json::from_value(serde_json::Value::from(name))
        .map_err(|_| PyValueError::new_err(format!("unknown averaging {name:?} (support-weighted or micro)")))
}

/// Metrics report from `(p_bioagressor, p_disease)` pairs and
/// `(bioagressor, disease)` gold pairs.
#[pyfunction]
#[pyo3(signature = (probabilities, actuals, threshold = 0.5, averaging = "support-weighted"))]
fn evaluate_predictions(
    py: Python<'_>,
    probabilities: Vec<(f64, f64)>,
    actuals: Vec<(bool, bool)>,
    threshold: f64,
    averaging: &str,
) -> PyResult<Py<PyAny>> {
    let probs: Vec<[f64; 2]> = probabilities.into_iter().map(|(a, b)| [a, b]).collect();
    let gold: Vec<LabelSet> = actuals.into_iter().map(|(a, b)| LabelSet::new(a, b)).collect();
    let report = metrics::evaluate_predictions(&probs, &gold, threshold, parse_averaging(averaging)?).map_err(err)?;
    to_py(py, &report)
}

/// Synthetic bulletins with planted vocabulary. Returns a list of dicts
/// with `id`, `text` and `tags` (`[name, category]` pairs).
#[pyfunction]
#[pyo3(signature = (n_docs = 500, seed = 0))]
fn synthetic_corpus(py: Python<'_>, n_docs: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let corpus = synthetic::generate(SyntheticParams { n_docs, seed, ..Default::default() });
    let docs: Vec<serde_json::Value> = corpus
        .docs
        .iter()
        .map(|d| {
            let tags: Vec<(String, String)> = corpus
                .catalog
                .get(&d.id)
                .into_iter()
                .flatten()
                .map(|t| (t.name.clone(), t.category.to_string()))
                .collect();
            serde_json::json!({ "id": d.id, "text": d.text, "tags": tags })
        })
        .collect();
    to_py(py, &docs)
}

/// Keyword matcher with plural folding and multi-word phrases.
#[pyclass(name = "KeywordFilter", module = "phyto", frozen)]
struct PyKeywordFilter {
    inner: social::KeywordFilter,
}

#[pymethods]
impl PyKeywordFilter {
    #[new]
    fn new(keywords: Vec<String>) -> PyResult<Self> {
        Ok(Self { inner: social::KeywordFilter::new(keywords).map_err(err)? })
    }

    /// Canonical keywords found in `text`, sorted.
    fn matches(&self, text: &str) -> Vec<String> {
        self.inner.matches(text).into_iter().collect()
    }
}

/// A trained classifier: frozen encoder plus two-label head.
#[pyclass(name = "Model", module = "phyto", frozen)]
struct PyModel {
    inner: ModelArtifact,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: load_artifact(&path).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_artifact(&self.inner, &path).map_err(err)
    }

    #[getter]
    fn best_epoch(&self) -> usize {
        self.inner.best_epoch
    }

    #[getter]
    fn best_f1(&self) -> f64 {
        self.inner.best_f1
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.config.threshold
    }

    /// `(p_bioagressor, p_disease)`.
    fn probabilities(&self, text: &str) -> (f64, f64) {
        let [a, b] = self.inner.probabilities(text);
        (a, b)
    }

    /// Probabilities and decided labels; `threshold` defaults to the one the
    /// model was trained with.
    #[pyo3(signature = (text, threshold = None))]
    fn predict(&self, py: Python<'_>, text: &str, threshold: Option<f64>) -> PyResult<Py<PyAny>> {
        let t = threshold.unwrap_or(self.inner.config.threshold);
        if !(t > 0.0 && t < 1.0) {
            return Err(PyValueError::new_err(format!("threshold {t} not in (0, 1)")));
        }
        to_py(py, &self.inner.predict_with(text, t))
    }

    /// Metrics on `examples` (dicts with `text`, `bioagressor`, `disease`).
    #[pyo3(signature = (examples, threshold = None, averaging = "support-weighted"))]
    fn evaluate(
        &self,
        py: Python<'_>,
        examples: Vec<Bound<'_, PyAny>>,
        threshold: Option<f64>,
        averaging: &str,
    ) -> PyResult<Py<PyAny>> {
        let chunks = examples_from_py(py, &examples)?;
        let t = threshold.unwrap_or(self.inner.config.threshold);
        let report = metrics::evaluate(&self.inner, &chunks, t, parse_averaging(averaging)?).map_err(err)?;
        to_py(py, &report)
    }

    fn __repr__(&self) -> String {
        format!("Model(backend={:?}, best_epoch={}, best_f1={:.4})", self.inner.backend().name(), self.inner.best_epoch, self.inner.best_f1)
    }
}


#[derive(serde::Deserialize)]
struct ExampleIn {
    #[serde(default)]
    doc_id: Option<String>,
    text: String,
    bioagressor: bool,
    disease: bool,
}

fn examples_from_py(py: Python<'_>, items: &[Bound<'_, PyAny>]) -> PyResult<Vec<Chunk>> {
    let json = py.import("json")?;
    items
        .iter()
        .enumerate()
        .map(|(i, obj)| {
            let s: String = json.call_method1("dumps", (obj,))?.extract()?;
            let ex: ExampleIn =
                serde_json::from_str(&s).map_err(|e| PyValueError::new_err(format!("example {i}: {e}")))?;
            Ok(Chunk {
                chunk_id: format!("ex-{i}"),
                doc_id: ex.doc_id.unwrap_or_else(|| format!("ex-{i}")),
                word_count: ex.text.split_whitespace().count(),
                text: ex.text,
                labels: LabelSet::new(ex.bioagressor, ex.disease),
                merged_remainder: false,
            })
        })
        .collect()
}

/// Split `examples` by document, train the head and evaluate on the
/// held-out side. Returns `(model, run_report, test_metrics)`.
#[pyfunction]
#[pyo3(signature = (examples, split_ratio = 0.8, seed = 0, epochs = 5, threshold = 0.5, backend = "offline-test"))]
fn train(
    py: Python<'_>,
    examples: Vec<Bound<'_, PyAny>>,
    split_ratio: f64,
    seed: u64,
    epochs: usize,
    threshold: f64,
    backend: &str,
) -> PyResult<(PyModel, Py<PyAny>, Py<PyAny>)> {
    let chunks = examples_from_py(py, &examples)?;
    let spec: BackendSpec = backend.parse().map_err(PyValueError::new_err)?;
    let cfg = TrainingConfig { seed, clf_epochs: epochs, threshold, ..Default::default() };
    cfg.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
    let (artifact, report, test_metrics) = py
        .detach(move || -> Result<_, String> {
            let split = split_dataset(&chunks, split_ratio, seed).map_err(|e| e.to_string())?;
            let enc = build_backend(&spec, &cfg, harness::OfflineEncoder::DEFAULT_DIM, 0).map_err(|e| e.to_string())?;
            let (artifact, report) = train_classifier(&enc, &split, &cfg).map_err(|e| e.to_string())?;
            let m = metrics::evaluate(&artifact, &split.test, threshold, AucAveraging::SupportWeighted)
                .map_err(|e| e.to_string())?;
            Ok((artifact, report, m))
        })
        .map_err(PhytoError::new_err)?;
    Ok((PyModel { inner: artifact }, to_py(py, &report)?, to_py(py, &test_metrics)?))
}

#[pymodule]
fn phyto(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PhytoError", m.py().get_type::<PhytoError>())?;
    m.add_function(wrap_pyfunction!(clean_text, m)?)?;
    m.add_function(wrap_pyfunction!(chunk_text, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_predictions, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_class::<PyKeywordFilter>()?;
    m.add_class::<PyModel>()?;
    Ok(())
}
