//! Confusion matrices and the scalar performance measures derived from them,
//! regression measures, and the Bayes-formula posterior.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::PriorVector;
use crate::{Error, Result};

/// A measure value that may be undefined because its denominator is zero.
/// Serializes as a number, or as the string `"undefined"`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Measure(Option<f64>);

impl Measure {
    pub const UNDEFINED: Measure = Measure(None);

    pub fn defined(v: f64) -> Self {
        Measure(Some(v))
    }

    /// `num / den`, undefined when `den == 0`.
    pub fn ratio(num: f64, den: f64) -> Self {
        if den == 0.0 {
            Measure(None)
        } else {
            Measure(Some(num / den))
        }
    }

    pub fn value(self) -> Option<f64> {
        self.0
    }

    pub fn is_defined(self) -> bool {
        self.0.is_some()
    }

    /// Panics when undefined. Meant for tests and known-defined cases.
    pub fn unwrap(self) -> f64 {
        self.0.expect("measure is undefined")
    }

    pub fn map(self, f: impl FnOnce(f64) -> f64) -> Self {
        Measure(self.0.map(f))
    }
}

impl From<Option<f64>> for Measure {
    fn from(v: Option<f64>) -> Self {
        Measure(v)
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v:.3}"),
            None => f.write_str("undefined"),
        }
    }
}

impl Serialize for Measure {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Some(v) if v.is_finite() => s.serialize_f64(v),
            _ => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Measure {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Measure(Some(v))),
            Raw::Str(s) if s == "undefined" => Ok(Measure(None)),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("unexpected measure '{s}'"))),
        }
    }
}

/// `c x c` count table; entry `(i, j)` counts cases truly in class `i`
/// classified as class `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    class_count: usize,
    /// Row-major counts.
    counts: Vec<u64>,
}

/// The four cells of a two-class table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn from_labels(truth: &[usize], predicted: &[usize], class_count: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::LengthMismatch { left: truth.len(), right: predicted.len() });
        }
        if truth.is_empty() {
            return Err(Error::invalid("confusion matrix needs at least one sample"));
        }
        let mut counts = vec![0u64; class_count * class_count];
        for (&t, &p) in truth.iter().zip(predicted) {
            for label in [t, p] {
                if label >= class_count {
                    return Err(Error::LabelOutOfRange { label, class_count });
                }
            }
            counts[t * class_count + p] += 1;
        }
        Ok(Self { class_count, counts })
    }

    /// From a square table of rows (true class) by columns (predicted class).
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let c = rows.len();
        if c < 2 {
            return Err(Error::invalid("confusion matrix needs at least two classes"));
        }
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::invalid("confusion matrix must be square"));
        }
        Ok(Self { class_count: c, counts: rows.concat() })
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.class_count + predicted]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.class_count).map(<[u64]>::to_vec).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.class_count).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        (0..self.class_count).map(|j| self.get(i, j)).sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        (0..self.class_count).map(|i| self.get(i, j)).sum()
    }

    pub fn accuracy(&self) -> Measure {
        Measure::ratio(self.trace() as f64, self.total() as f64)
    }

    /// One-vs-rest collapse around `positive`.
    pub fn binary_counts(&self, positive: usize) -> BinaryCounts {
        let tp = self.get(positive, positive);
        let fn_ = self.row_sum(positive) - tp;
        let fp = self.col_sum(positive) - tp;
        let tn = self.total() - tp - fn_ - fp;
        BinaryCounts { tp, fp, tn, fn_ }
    }
}

/// Two-class measures. Each is undefined when its denominator vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetricBundle {
    pub counts: BinaryCounts,
    pub accuracy: Measure,
    pub sensitivity: Measure,
    pub specificity: Measure,
    pub ppv: Measure,
    pub npv: Measure,
    pub precision: Measure,
    pub recall: Measure,
    pub f1: Measure,
    pub balanced_accuracy: Measure,
    pub youden_j: Measure,
    pub mcc: Measure,
    pub dice: Measure,
    pub jaccard: Measure,
}

impl BinaryMetricBundle {
    pub fn from_counts(counts: BinaryCounts) -> Self {
        let BinaryCounts { tp, fp, tn, fn_ } = counts;
        let (tp, fp, tn, fn_) = (tp as f64, fp as f64, tn as f64, fn_ as f64);
        let sensitivity = Measure::ratio(tp, tp + fn_);
        let specificity = Measure::ratio(tn, tn + fp);
        let ppv = Measure::ratio(tp, tp + fp);
        let both = match (sensitivity.value(), specificity.value()) {
            (Some(se), Some(sp)) => Some((se, sp)),
            _ => None,
        };
        let mcc_den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        Self {
            counts,
            accuracy: Measure::ratio(tp + tn, tp + tn + fp + fn_),
            sensitivity,
            specificity,
            ppv,
            npv: Measure::ratio(tn, tn + fn_),
            precision: ppv,
            recall: sensitivity,
            f1: Measure::ratio(2.0 * tp, 2.0 * tp + fp + fn_),
            balanced_accuracy: both.map(|(se, sp)| 0.5 * (se + sp)).into(),
            youden_j: both.map(|(se, sp)| se + sp - 1.0).into(),
            mcc: Measure::ratio(tp * tn - fp * fn_, mcc_den),
            dice: Measure::ratio(2.0 * tp, 2.0 * tp + fp + fn_),
            jaccard: Measure::ratio(tp, tp + fp + fn_),
        }
    }

    /// Name/value pairs in a fixed order, for reports.
    pub fn named(&self) -> [(&'static str, Measure); 13] {
        [
            ("accuracy", self.accuracy),
            ("sensitivity", self.sensitivity),
            ("specificity", self.specificity),
            ("ppv", self.ppv),
            ("npv", self.npv),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
            ("balanced_accuracy", self.balanced_accuracy),
            ("youden_j", self.youden_j),
            ("mcc", self.mcc),
            ("dice", self.dice),
            ("jaccard", self.jaccard),
        ]
    }
}

/// Two-class measures with `positive` against all other classes merged.
pub fn binary_metrics(cm: &ConfusionMatrix, positive: usize) -> Result<BinaryMetricBundle> {
    if positive >= cm.class_count() {
        return Err(Error::LabelOutOfRange { label: positive, class_count: cm.class_count() });
    }
    Ok(BinaryMetricBundle::from_counts(cm.binary_counts(positive)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassMetrics {
    pub accuracy: Measure,
    /// Per-class recall (one-vs-rest sensitivity), indexed by class.
    pub recall: Vec<Measure>,
    /// Per-class precision, indexed by class.
    pub precision: Vec<Measure>,
    /// Mean of the defined recalls.
    pub balanced_accuracy: Measure,
    /// Classes left out of the balanced-accuracy mean (empty truth row).
    pub skipped_classes: Vec<usize>,
}

pub fn multiclass_metrics(cm: &ConfusionMatrix) -> MulticlassMetrics {
    let c = cm.class_count();
    let recall: Vec<Measure> = (0..c).map(|i| Measure::ratio(cm.get(i, i) as f64, cm.row_sum(i) as f64)).collect();
    let precision = (0..c).map(|j| Measure::ratio(cm.get(j, j) as f64, cm.col_sum(j) as f64)).collect();
    let skipped_classes: Vec<usize> = (0..c).filter(|&i| !recall[i].is_defined()).collect();
    let defined: Vec<f64> = recall.iter().filter_map(|m| m.value()).collect();
    let balanced_accuracy = if defined.is_empty() {
        Measure::UNDEFINED
    } else {
        Measure::defined(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    MulticlassMetrics { accuracy: cm.accuracy(), recall, precision, balanced_accuracy, skipped_classes }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetricBundle {
    pub mse: f64,
    pub mae: f64,
    pub pearson_r: Measure,
    pub q2: Measure,
}

/// MSE, MAE, Pearson r and Q² with the 1/N (population) normalization
/// throughout.
pub fn regression_metrics(truth: &[f64], predicted: &[f64]) -> Result<RegressionMetricBundle> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch { left: truth.len(), right: predicted.len() });
    }
    if truth.len() < 2 {
        return Err(Error::invalid("regression metrics need at least two samples"));
    }
    let n = truth.len() as f64;
    let mse = truth.iter().zip(predicted).map(|(y, p)| (p - y).powi(2)).sum::<f64>() / n;
    let mae = truth.iter().zip(predicted).map(|(y, p)| (p - y).abs()).sum::<f64>() / n;
    let m = truth.iter().sum::<f64>() / n;
    let m_hat = predicted.iter().sum::<f64>() / n;
    let var_t = truth.iter().map(|y| (y - m).powi(2)).sum::<f64>() / n;
    let var_p = predicted.iter().map(|p| (p - m_hat).powi(2)).sum::<f64>() / n;
    let cov = truth.iter().zip(predicted).map(|(y, p)| (y - m) * (p - m_hat)).sum::<f64>() / n;
    let pearson_r = if var_t > 0.0 && var_p > 0.0 {
        Measure::defined((cov / (var_t.sqrt() * var_p.sqrt())).clamp(-1.0, 1.0))
    } else {
        Measure::UNDEFINED
    };
    let q2 = if var_t > 0.0 { Measure::defined(1.0 - mse / var_t) } else { Measure::UNDEFINED };
    Ok(RegressionMetricBundle { mse, mae, pearson_r, q2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub posterior: PriorVector,
    /// `sum_k p(x|k) P(k)`.
    pub evidence: f64,
}

/// Bayes' rule: `P(j|x) = p(x|j) P(j) / sum_k p(x|k) P(k)`.
pub fn bayes_posterior(priors: &PriorVector, likelihoods: &[f64]) -> Result<Posterior> {
    if priors.len() != likelihoods.len() {
        return Err(Error::LengthMismatch { left: priors.len(), right: likelihoods.len() });
    }
    if likelihoods.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::invalid("likelihoods must be finite and non-negative"));
    }
    let joint: Vec<f64> = priors.as_slice().iter().zip(likelihoods).map(|(p, l)| p * l).collect();
    let evidence: f64 = joint.iter().sum();
    if evidence <= 0.0 {
        return Err(Error::invalid("zero evidence: every class has zero likelihood or prior"));
    }
    let mut posterior: Vec<f64> = joint.iter().map(|j| j / evidence).collect();
    // Absorb rounding so the result passes PriorVector's sum check.
    let drift = 1.0 - posterior.iter().sum::<f64>();
    if let Some(max) = posterior.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *max += drift;
    }
    Ok(Posterior { posterior: PriorVector::new(posterior)?, evidence })
}
