//! Accuracy, macro F1, G-Mean and macro one-vs-rest AUC over three classes.

use serde::{Deserialize, Serialize};

use crate::data::{ClassLabel, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::model::argmax;

/// `counts[true][predicted]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix {
    pub counts: [[usize; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum()
    }

    /// Samples whose true class is `c`.
    pub fn support(&self, c: usize) -> usize {
        self.counts[c].iter().sum()
    }

    /// Samples predicted as `c`.
    pub fn predicted(&self, c: usize) -> usize {
        (0..NUM_CLASSES).map(|t| self.counts[t][c]).sum()
    }

    /// `None` when class `c` never occurs.
    pub fn recall(&self, c: usize) -> Option<f64> {
        match self.support(c) {
            0 => None,
            n => Some(self.counts[c][c] as f64 / n as f64),
        }
    }

    /// Zero when class `c` is never predicted.
    pub fn precision(&self, c: usize) -> f64 {
        match self.predicted(c) {
            0 => 0.0,
            n => self.counts[c][c] as f64 / n as f64,
        }
    }

    pub fn merged(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        let mut out = *self;
        for (row, other_row) in out.counts.iter_mut().zip(&other.counts) {
            for (a, b) in row.iter_mut().zip(other_row) {
                *a += b;
            }
        }
        out
    }
}

pub fn confusion(y_true: &[ClassLabel], y_pred: &[ClassLabel]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::dims(
            "confusion predictions",
            y_true.len(),
            y_pred.len(),
        ));
    }
    if y_true.is_empty() {
        return Err(Error::EmptyInput("confusion"));
    }
    let mut cm = ConfusionMatrix::default();
    for (t, p) in y_true.iter().zip(y_pred) {
        cm.counts[t.index()][p.index()] += 1;
    }
    Ok(cm)
}

fn nonempty(cm: &ConfusionMatrix, what: &'static str) -> Result<()> {
    if cm.total() == 0 {
        return Err(Error::EmptyInput(what));
    }
    Ok(())
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    nonempty(cm, "accuracy")?;
    Ok(cm.trace() as f64 / cm.total() as f64)
}

/// Unweighted mean of per-class `2PR / (P + R)`, with `F1 = 0` when
/// `P + R = 0`.
pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    nonempty(cm, "macro_f1")?;
    let sum: f64 = (0..NUM_CLASSES)
        .map(|c| {
            let p = cm.precision(c);
            let r = cm.recall(c).unwrap_or(0.0);
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        })
        .sum();
    Ok(sum / NUM_CLASSES as f64)
}

/// Geometric mean of the three per-class recalls.
pub fn gmean(cm: &ConfusionMatrix) -> Result<f64> {
    nonempty(cm, "gmean")?;
    let mut product = 1.0;
    for label in ClassLabel::ALL {
        product *= cm.recall(label.index()).ok_or(Error::AbsentClass(label))?;
    }
    Ok(product.cbrt())
}

/// Binary AUC of `scores` for `positive[i]` versus the rest, via the
/// Mann-Whitney rank sum with average ranks for ties (a tied pair counts 1/2).
fn binary_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let n_pos = positive.iter().filter(|&&p| p).count() as f64;
    let n_neg = n as f64 - n_pos;
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg_rank = (i + j + 2) as f64 / 2.0;
        let tied_pos = order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        pos_rank_sum += avg_rank * tied_pos;
        i = j + 1;
    }
    (pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg)
}

/// Unweighted mean over classes of the one-vs-rest AUC of `probs[.][c]`.
pub fn auc_ovr_macro(y_true: &[ClassLabel], probs: &[[f64; NUM_CLASSES]]) -> Result<f64> {
    if y_true.len() != probs.len() {
        return Err(Error::dims("auc scores", y_true.len(), probs.len()));
    }
    if probs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("auc scores".into()));
    }
    let mut sum = 0.0;
    for label in ClassLabel::ALL {
        let positive: Vec<bool> = y_true.iter().map(|&t| t == label).collect();
        if !positive.contains(&true) {
            return Err(Error::AbsentClass(label));
        }
        if !positive.contains(&false) {
            return Err(Error::InvalidConfig(format!(
                "one-vs-rest AUC for {label} needs at least one sample of another class"
            )));
        }
        let scores: Vec<f64> = probs.iter().map(|p| p[label.index()]).collect();
        sum += binary_auc(&scores, &positive);
    }
    Ok(sum / NUM_CLASSES as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerClassMetrics {
    pub recall: [f64; NUM_CLASSES],
    pub precision: [f64; NUM_CLASSES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: f64,
    pub gmean: f64,
    pub f1: f64,
    pub acc: f64,
    pub confusion: ConfusionMatrix,
    pub per_class: PerClassMetrics,
}

impl MetricsReport {
    /// Scores predictions `argmax(probs)` against `y_true`.
    pub fn from_predictions(y_true: &[ClassLabel], probs: &[[f64; NUM_CLASSES]]) -> Result<Self> {
        let y_pred = probs
            .iter()
            .map(|p| ClassLabel::from_index(argmax(p)))
            .collect::<Result<Vec<_>>>()?;
        let cm = confusion(y_true, &y_pred)?;
        Ok(MetricsReport {
            auc: auc_ovr_macro(y_true, probs)?,
            gmean: gmean(&cm)?,
            f1: macro_f1(&cm)?,
            acc: accuracy(&cm)?,
            confusion: cm,
            per_class: PerClassMetrics {
                recall: std::array::from_fn(|c| cm.recall(c).unwrap_or(0.0)),
                precision: std::array::from_fn(|c| cm.precision(c)),
            },
        })
    }

    fn scalars(&self) -> impl Iterator<Item = f64> + '_ {
        [self.auc, self.gmean, self.f1, self.acc]
            .into_iter()
            .chain(self.per_class.recall)
            .chain(self.per_class.precision)
    }

    /// `auc,gmean,f1,acc`.
    pub fn csv_row(&self) -> String {
        format!(
            "{:?},{:?},{:?},{:?}",
            self.auc, self.gmean, self.f1, self.acc
        )
    }
}

pub const CSV_HEADER: &str = "auc,gmean,f1,acc";

/// Mean of every scalar metric; confusion matrices are summed.
pub fn cv_aggregate(reports: &[MetricsReport]) -> Result<MetricsReport> {
    let first = reports.first().ok_or(Error::EmptyInput("cv_aggregate"))?;
    let k = reports.len() as f64;
    let mean = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
    Ok(MetricsReport {
        auc: mean(&|r| r.auc),
        gmean: mean(&|r| r.gmean),
        f1: mean(&|r| r.f1),
        acc: mean(&|r| r.acc),
        confusion: reports[1..]
            .iter()
            .fold(first.confusion, |acc, r| acc.merged(&r.confusion)),
        per_class: PerClassMetrics {
            recall: std::array::from_fn(|c| mean(&|r| r.per_class.recall[c])),
            precision: std::array::from_fn(|c| mean(&|r| r.per_class.precision[c])),
        },
    })
}

/// Pretty JSON; refuses non-finite values rather than emitting `null`.
pub fn report_to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

pub fn report_serialize(report: &MetricsReport) -> Result<String> {
    ensure_finite(report)?;
    report_to_json(report)
}

pub fn report_deserialize(text: &str) -> Result<MetricsReport> {
    let report: MetricsReport = serde_json::from_str(text)?;
    ensure_finite(&report)?;
    Ok(report)
}

pub(crate) fn ensure_finite(report: &MetricsReport) -> Result<()> {
    if report.scalars().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("metrics report".into()));
    }
    Ok(())
}
