//! Per-label accuracy, precision, recall, F1, support-weighted averages and
//! ROC-AUC for the two-label task.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Chunk, Label, LabelSet};
use crate::harness::{decide, ModelArtifact};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("roc-auc needs at least one positive and one negative example")]
    SingleClass,
    #[error("{scores} scores for {actuals} actuals")]
    LengthMismatch { scores: usize, actuals: usize },
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("empty evaluation set")]
    Empty,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

/// Tally `(predicted, actual)` pairs.
pub fn confusion_counts(decisions: &[(bool, bool)]) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for &(p, a) in decisions {
        c.add(p, a);
    }
    c
}

/// A metric value; `degenerate` marks a zero denominator (value is then 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    pub degenerate: bool,
}

impl Ratio {
    fn of(num: f64, den: f64) -> Self {
        if den == 0.0 {
            Self { value: 0.0, degenerate: true }
        } else {
            Self { value: num / den, degenerate: false }
        }
    }
}

pub fn precision(c: &ConfusionCounts) -> Ratio {
    Ratio::of(c.tp as f64, (c.tp + c.fp) as f64)
}

pub fn recall(c: &ConfusionCounts) -> Ratio {
    Ratio::of(c.tp as f64, (c.tp + c.fn_) as f64)
}

/// Harmonic mean of precision and recall.
pub fn f1(c: &ConfusionCounts) -> Ratio {
    let p = precision(c);
    let r = recall(c);
    let h = Ratio::of(2.0 * p.value * r.value, p.value + r.value);
    Ratio { value: h.value, degenerate: h.degenerate || p.degenerate || r.degenerate }
}

pub fn accuracy(c: &ConfusionCounts) -> Ratio {
    Ratio::of((c.tp + c.tn) as f64, c.n() as f64)
}

/// Area under the ROC curve via the Mann-Whitney rank statistic with
/// midranks for ties, i.e. the probability that a random positive outscores a
/// random negative, ties counting one half.
pub fn roc_auc(scores: &[f64], actuals: &[bool]) -> Result<f64, MetricError> {
    if scores.len() != actuals.len() {
        return Err(MetricError::LengthMismatch { scores: scores.len(), actuals: actuals.len() });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite(i));
    }
    let n_pos = actuals.iter().filter(|a| **a).count();
    let n_neg = actuals.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; the tie block i..=j shares the mean rank
        let mid = (i + j) as f64 / 2.0 + 1.0;
        pos_rank_sum += mid * order[i..=j].iter().filter(|&&k| actuals[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AucAveraging {
    /// Per-label AUC averaged with positive-support weights.
    #[default]
    SupportWeighted,
    /// One AUC over all (example, label) pairs.
    Micro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: Option<f64>,
    pub counts: ConfusionCounts,
    /// Names of metrics whose denominator was zero.
    pub degenerate: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_label: BTreeMap<String, LabelMetrics>,
    pub weighted: WeightedMetrics,
    pub supports: BTreeMap<String, u64>,
    pub n_examples: usize,
    pub threshold: f64,
    pub auc_averaging: AucAveraging,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Build a report from per-example probabilities (label order as
/// [`Label::ALL`]) and gold label sets.
pub fn evaluate_predictions(
    probabilities: &[[f64; 2]],
    actuals: &[LabelSet],
    threshold: f64,
    averaging: AucAveraging,
) -> Result<MetricsReport, MetricError> {
    if probabilities.len() != actuals.len() {
        return Err(MetricError::LengthMismatch { scores: probabilities.len(), actuals: actuals.len() });
    }
    if probabilities.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut per_label = BTreeMap::new();
    let mut supports = BTreeMap::new();
    let mut notes = Vec::new();
    let mut rows: Vec<(u64, LabelMetrics)> = Vec::new();

    for label in Label::ALL {
        let idx = label.index();
        let gold: Vec<bool> = actuals.iter().map(|a| a.get(label)).collect();
        let scores: Vec<f64> = probabilities.iter().map(|p| p[idx]).collect();
        let mut counts = ConfusionCounts::default();
        for (p, &a) in probabilities.iter().zip(&gold) {
            counts.add(decide(*p, threshold).get(label), a);
        }
        let (acc, prec, rec, f) = (accuracy(&counts), precision(&counts), recall(&counts), f1(&counts));
        let degenerate: Vec<String> = [("accuracy", acc), ("precision", prec), ("recall", rec), ("f1", f)]
            .iter()
            .filter(|(_, r)| r.degenerate)
            .map(|(n, _)| n.to_string())
            .collect();
        let auc = match roc_auc(&scores, &gold) {
            Ok(v) => Some(v),
            Err(MetricError::SingleClass) => {
                notes.push(format!("{}: roc_auc undefined (single class), excluded from weighted average", label.as_str()));
                None
            }
            Err(e) => return Err(e),
        };
        let support = counts.tp + counts.fn_;
        let m = LabelMetrics {
            accuracy: acc.value,
            precision: prec.value,
            recall: rec.value,
            f1: f.value,
            roc_auc: auc,
            counts,
            degenerate,
        };
        supports.insert(label.as_str().to_owned(), support);
        rows.push((support, m.clone()));
        per_label.insert(label.as_str().to_owned(), m);
    }

    let total: u64 = rows.iter().map(|(s, _)| s).sum();
    let weighted_of = |get: &dyn Fn(&LabelMetrics) -> f64| -> f64 {
        if total == 0 {
            0.0
        } else {
            rows.iter().map(|(s, m)| *s as f64 * get(m)).sum::<f64>() / total as f64
        }
    };
    if total == 0 {
        notes.push("no positive examples: weighted averages set to 0".into());
    }
    let roc = match averaging {
        AucAveraging::SupportWeighted => {
            let usable: Vec<(u64, f64)> = rows.iter().filter_map(|(s, m)| m.roc_auc.map(|a| (*s, a))).collect();
            let w: u64 = usable.iter().map(|(s, _)| s).sum();
            (w > 0).then(|| usable.iter().map(|(s, a)| *s as f64 * a).sum::<f64>() / w as f64)
        }
        AucAveraging::Micro => {
            let scores: Vec<f64> = probabilities.iter().flat_map(|p| p.iter().copied()).collect();
            let gold: Vec<bool> = actuals.iter().flat_map(|a| Label::ALL.map(|l| a.get(l))).collect();
            roc_auc(&scores, &gold).ok()
        }
    };
    let weighted = WeightedMetrics {
        precision: weighted_of(&|m| m.precision),
        recall: weighted_of(&|m| m.recall),
        f1: weighted_of(&|m| m.f1),
        roc_auc: roc,
    };
    Ok(MetricsReport {
        per_label,
        weighted,
        supports,
        n_examples: probabilities.len(),
        threshold,
        auc_averaging: averaging,
        notes,
    })
}

/// Score `examples` with the artifact and report metrics at `threshold`.
pub fn evaluate(
    artifact: &ModelArtifact,
    examples: &[Chunk],
    threshold: f64,
    averaging: AucAveraging,
) -> Result<MetricsReport, MetricError> {
    use rayon::prelude::*;
    let probs: Vec<[f64; 2]> = examples.par_iter().map(|ex| artifact.probabilities(&ex.text)).collect();
    let actuals: Vec<LabelSet> = examples.iter().map(|ex| ex.labels).collect();
    evaluate_predictions(&probs, &actuals, threshold, averaging)
}

impl MetricsReport {
    /// Aligned plain-text table: one row per label plus the weighted row.
    pub fn to_table(&self) -> String {
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<18} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "", "Accuracy", "Precision", "Recall", "F Score", "ROC_AUC"
        );
        for label in Label::ALL {
            let m = &self.per_label[label.as_str()];
            let name = match label {
                Label::Bioagressor => "Bioagressor",
                Label::Disease => "Disease",
            };
            let _ = writeln!(
                out,
                "{:<18} {:>10} {:>10} {:>10} {:>10} {:>10}",
                name,
                cell(Some(m.accuracy)),
                cell(Some(m.precision)),
                cell(Some(m.recall)),
                cell(Some(m.f1)),
                ""
            );
        }
        let w = &self.weighted;
        let _ = writeln!(
            out,
            "{:<18} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "Weighted Average",
            "",
            cell(Some(w.precision)),
            cell(Some(w.recall)),
            cell(Some(w.f1)),
            cell(w.roc_auc)
        );
        out
    }
}
