use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{Pipeline, Stage};
use super::split::{kfold_split, Fold, KFoldOptions, SchemeMeta, SplitPlan};
use crate::data::Dataset;
use crate::metrics::{binary_metrics, multiclass_metrics, ConfusionMatrix, Measure};
use crate::numeric;
use crate::rng::derive_seed;
use crate::roc::{auc, average_aucs, AucAverage, ScoreSet};
use crate::{Error, Result};

/// Metric used to pick hyperparameters in nested CV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    #[default]
    Accuracy,
    BalancedAccuracy,
    Auc,
    Mcc,
}

impl SelectionMetric {
    pub fn key(self) -> &'static str {
        match self {
            SelectionMetric::Accuracy => "accuracy",
            SelectionMetric::BalancedAccuracy => "balanced_accuracy",
            SelectionMetric::Auc => "auc",
            SelectionMetric::Mcc => "mcc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSpec {
    /// Positive class for two-class measures and ROC scores.
    pub positive: usize,
    pub selection: SelectionMetric,
}

impl Default for MetricSpec {
    fn default() -> Self {
        Self { positive: 1, selection: SelectionMetric::Accuracy }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FoldStatus {
    Ok,
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub repeat: usize,
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(flatten)]
    pub status: FoldStatus,
    pub confusion: Option<ConfusionMatrix>,
    pub metrics: BTreeMap<String, Measure>,
    pub scores: Option<ScoreSet>,
    /// Nested CV: the selected grid entry and the inner-CV score of each entry.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_scores: Option<Vec<Measure>>,
}

impl FoldResult {
    pub fn is_ok(&self) -> bool {
        self.status == FoldStatus::Ok
    }

    pub fn metric(&self, key: &str) -> Measure {
        self.metrics.get(key).copied().unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Mean over folds where the measure is defined.
    pub mean: Measure,
    pub sd: Measure,
    pub n_defined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scheme: SchemeMeta,
    pub seed: u64,
    pub pipeline: Vec<String>,
    pub folds: Vec<FoldResult>,
    pub aggregate: BTreeMap<String, Aggregate>,
    /// AUC of the ROC built from all test-fold scores pooled together.
    pub pooled_auc: Measure,
    /// Per-fold AUCs averaged.
    pub averaged_auc: Option<AucAverage>,
    pub failed_folds: Vec<usize>,
    pub warnings: Vec<String>,
    /// Set when the evaluation is known to be biased (peeking).
    pub invalid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub watermark: Option<String>,
    pub plan: SplitPlan,
}

impl EvalReport {
    pub fn mean(&self, key: &str) -> Measure {
        self.aggregate.get(key).map(|a| a.mean).unwrap_or_default()
    }

    pub fn fold_scores(&self) -> Vec<ScoreSet> {
        self.folds.iter().filter_map(|f| f.scores.clone()).collect()
    }
}

fn fold_metrics(cm: &ConfusionMatrix, scores: Option<&ScoreSet>, spec: &MetricSpec) -> BTreeMap<String, Measure> {
    let mut out = BTreeMap::new();
    if cm.class_count() == 2 {
        if let Ok(b) = binary_metrics(cm, spec.positive) {
            for (name, v) in b.named() {
                out.insert(name.to_string(), v);
            }
        }
    } else {
        let m = multiclass_metrics(cm);
        out.insert("accuracy".into(), m.accuracy);
        out.insert("balanced_accuracy".into(), m.balanced_accuracy);
        for (c, r) in m.recall.iter().enumerate() {
            out.insert(format!("recall_{c}"), *r);
        }
    }
    out.insert("auc".into(), scores.and_then(|s| auc(s).ok()).into());
    out
}

/// Fit on the fold's training rows, evaluate on its test rows.
fn run_fold(ds: &Dataset, pipeline: &Pipeline, fold: &Fold, spec: &MetricSpec, seed: u64) -> FoldResult {
    let mut result = FoldResult {
        repeat: fold.repeat,
        fold: fold.fold,
        n_train: fold.train.len(),
        n_test: fold.test.len(),
        status: FoldStatus::Ok,
        confusion: None,
        metrics: BTreeMap::new(),
        scores: None,
        selected: None,
        inner_scores: None,
    };
    let outcome = (|| -> Result<()> {
        let train = ds.subset(&fold.train);
        let test = ds.subset(&fold.test);
        let fitted = pipeline.fit(&train, seed)?;
        let pred = fitted.predict(&test, spec.positive)?;
        let cm = ConfusionMatrix::from_labels(test.labels(), &pred.labels, ds.class_count())?;
        let scores = match pred.scores {
            Some(s) => Some(ScoreSet::new(s, test.labels().iter().map(|&l| l == spec.positive).collect())?),
            None => None,
        };
        result.metrics = fold_metrics(&cm, scores.as_ref(), spec);
        result.confusion = Some(cm);
        result.scores = scores;
        Ok(())
    })();
    if let Err(e) = outcome {
        result.status = FoldStatus::Failed { message: e.to_string() };
    }
    result
}

fn fold_seed(seed: u64, fold: &Fold) -> u64 {
    derive_seed(seed, &[fold.repeat as u64, fold.fold as u64])
}

fn assemble(plan: &SplitPlan, seed: u64, pipeline: Vec<String>, folds: Vec<FoldResult>) -> EvalReport {
    let mut keys: Vec<String> = folds.iter().flat_map(|f| f.metrics.keys().cloned()).collect();
    keys.sort();
    keys.dedup();
    let aggregate = keys
        .into_iter()
        .map(|k| {
            let vals: Vec<f64> = folds.iter().filter(|f| f.is_ok()).filter_map(|f| f.metric(&k).value()).collect();
            let agg = Aggregate {
                mean: if vals.is_empty() { Measure::UNDEFINED } else { Measure::defined(numeric::mean(&vals)) },
                sd: if vals.len() < 2 { Measure::UNDEFINED } else { Measure::defined(numeric::sample_variance(&vals).sqrt()) },
                n_defined: vals.len(),
            };
            (k, agg)
        })
        .collect();
    let failed_folds: Vec<usize> = (0..folds.len()).filter(|&i| !folds[i].is_ok()).collect();
    let fold_scores: Vec<ScoreSet> = folds.iter().filter_map(|f| f.scores.clone()).collect();
    let usable: Vec<ScoreSet> = fold_scores.iter().filter(|s| s.n_pos() > 0 && s.n_neg() > 0).cloned().collect();
    let pooled_auc = if fold_scores.is_empty() {
        Measure::UNDEFINED
    } else {
        auc(&ScoreSet::concat(&fold_scores)).ok().into()
    };
    let averaged_auc = (!fold_scores.is_empty()).then(|| average_aucs(&fold_scores));
    let mut warnings = plan.warnings.clone();
    if !failed_folds.is_empty() {
        warnings.push(format!("{} fold(s) failed and were excluded from the aggregate", failed_folds.len()));
    }
    if usable.len() < fold_scores.len() {
        warnings.push(format!("{} fold(s) hold a single class; excluded from averaged AUC", fold_scores.len() - usable.len()));
    }
    EvalReport {
        scheme: plan.scheme.clone(),
        seed,
        pipeline,
        folds,
        aggregate,
        pooled_auc,
        averaged_auc,
        failed_folds,
        warnings,
        invalid: false,
        watermark: None,
        plan: plan.clone(),
    }
}

/// Run every fold of `plan`: fit on train, evaluate on test. Folds run in
/// parallel; results are keyed by fold so order never matters.
pub fn cross_validate(ds: &Dataset, pipeline: &Pipeline, plan: &SplitPlan, spec: &MetricSpec, seed: u64) -> Result<EvalReport> {
    plan.validate(ds)?;
    let folds: Vec<FoldResult> = plan.folds.par_iter().map(|f| run_fold(ds, pipeline, f, spec, fold_seed(seed, f))).collect();
    Ok(assemble(plan, seed, pipeline.describe(), folds))
}

/// Evaluate on the training data itself.
pub fn resubstitute(ds: &Dataset, pipeline: &Pipeline, spec: &MetricSpec, seed: u64) -> Result<EvalReport> {
    cross_validate(ds, pipeline, &SplitPlan::resubstitution(ds.n_samples()), spec, seed)
}

/// Acknowledgement token for [`cross_validate_with_peeking`].
#[derive(Debug, Clone, Copy)]
pub struct UnsafePeeking;

pub const PEEKING_WATERMARK: &str = "INVALID: preprocessing was fitted on all data before resampling (peeking)";

/// The forbidden construction: fit `preprocessing` on the full dataset, then
/// cross-validate on the transformed data. Exists to demonstrate the
/// resulting optimism; the report is marked invalid.
pub fn cross_validate_with_peeking(
    ds: &Dataset,
    preprocessing: &dyn Stage,
    pipeline: &Pipeline,
    plan: &SplitPlan,
    spec: &MetricSpec,
    seed: u64,
    _ack: UnsafePeeking,
) -> Result<EvalReport> {
    let fitted = preprocessing.fit(ds, derive_seed(seed, &[u64::MAX]))?;
    let peeked = fitted.transform(ds)?;
    let mut report = cross_validate(&peeked, pipeline, plan, spec, seed)?;
    report.pipeline.insert(0, format!("{} [fitted on all data]", preprocessing.name()));
    report.invalid = true;
    report.watermark = Some(PEEKING_WATERMARK.into());
    report.warnings.push(PEEKING_WATERMARK.into());
    Ok(report)
}

/// One hyperparameter setting: a named pipeline.
#[derive(Debug, Clone)]
pub struct GridPoint {
    pub name: String,
    pub pipeline: Pipeline,
}

/// Nested cross-validation. For each outer fold, an inner k-fold CV on the
/// outer training rows scores every grid point; the best one (first on ties)
/// is refitted on all outer training rows and tested on the outer test rows.
pub fn nested_cv(
    ds: &Dataset,
    grid: &[GridPoint],
    outer: &SplitPlan,
    inner_k: usize,
    spec: &MetricSpec,
    seed: u64,
) -> Result<EvalReport> {
    if grid.is_empty() {
        return Err(Error::invalid("hyperparameter grid is empty"));
    }
    outer.validate(ds)?;
    let grouped = outer.scheme.grouped && ds.groups().is_some();
    let folds: Vec<FoldResult> = outer
        .folds
        .par_iter()
        .map(|f| {
            let outer_seed = fold_seed(seed, f);
            let inner = (|| -> Result<(usize, Vec<Measure>)> {
                let train = ds.subset(&f.train);
                let opts = KFoldOptions { k: inner_k, stratified: outer.scheme.stratified, grouped, repeats: 1 };
                let inner_seed = derive_seed(outer_seed, &[1]);
                let inner_plan = kfold_split(&train, opts, inner_seed)?;
                let mut scores = Vec::with_capacity(grid.len());
                for (g, point) in grid.iter().enumerate() {
                    let r = cross_validate(&train, &point.pipeline, &inner_plan, spec, derive_seed(inner_seed, &[g as u64]))?;
                    if !r.failed_folds.is_empty() {
                        return Err(Error::Learner(format!("inner CV failed for grid point '{}'", point.name)));
                    }
                    scores.push(r.mean(spec.selection.key()));
                }
                let mut best = 0;
                for (g, s) in scores.iter().enumerate() {
                    let v = s.value().unwrap_or(f64::NEG_INFINITY);
                    if v > scores[best].value().unwrap_or(f64::NEG_INFINITY) {
                        best = g;
                    }
                }
                Ok((best, scores))
            })();
            match inner {
                Ok((best, scores)) => {
                    let mut r = run_fold(ds, &grid[best].pipeline, f, spec, outer_seed);
                    r.selected = Some(grid[best].name.clone());
                    r.inner_scores = Some(scores);
                    r
                }
                Err(e) => FoldResult {
                    repeat: f.repeat,
                    fold: f.fold,
                    n_train: f.train.len(),
                    n_test: f.test.len(),
                    status: FoldStatus::Failed { message: format!("inner CV: {e}") },
                    confusion: None,
                    metrics: BTreeMap::new(),
                    scores: None,
                    selected: None,
                    inner_scores: None,
                },
            }
        })
        .collect();
    let description = grid.iter().map(|g| format!("grid:{}", g.name)).collect();
    Ok(assemble(outer, seed, description, folds))
}
