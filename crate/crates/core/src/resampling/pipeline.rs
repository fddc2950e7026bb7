use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PriorVector};
use crate::models::{Classifier, GnbLearner, Learner, MajorityLearner};
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};

/// A preprocessing step. `fit` only ever sees training-fold data.
pub trait Stage: Send + Sync {
    fn name(&self) -> String;

    fn fit(&self, train: &Dataset, seed: u64) -> Result<Box<dyn FittedStage>>;
}

/// Fitted parameters of a [`Stage`]; immutable after fit.
pub trait FittedStage: Send + Sync {
    /// Applied to the training fold the stage was fitted on. Augmentation
    /// stages add rows here.
    fn transform_train(&self, train: &Dataset) -> Result<Dataset> {
        self.transform(train)
    }

    /// Applied to everything else (test folds, new cases), using only the
    /// fitted parameters.
    fn transform(&self, data: &Dataset) -> Result<Dataset>;
}

/// Ordered stages followed by a learner.
#[derive(Clone)]
pub struct Pipeline {
    stages: Vec<Arc<dyn Stage>>,
    learner: Arc<dyn Learner>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.describe()).finish()
    }
}

pub struct FittedPipeline {
    stages: Vec<Box<dyn FittedStage>>,
    model: Box<dyn Classifier>,
}

/// Predicted labels and, when the model has one, the score of the positive
/// class for every row.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub labels: Vec<usize>,
    pub scores: Option<Vec<f64>>,
}

impl Pipeline {
    pub fn new(learner: impl Learner + 'static) -> Self {
        Self { stages: Vec::new(), learner: Arc::new(learner) }
    }

    pub fn with_stage(mut self, stage: impl Stage + 'static) -> Self {
        self.stages.push(Arc::new(stage));
        self
    }

    pub fn describe(&self) -> Vec<String> {
        self.stages.iter().map(|s| s.name()).chain(std::iter::once(self.learner.name())).collect()
    }

    /// Fit every stage in order on the (progressively transformed) training
    /// data, then the learner.
    pub fn fit(&self, train: &Dataset, seed: u64) -> Result<FittedPipeline> {
        let mut data = train.clone();
        let mut fitted = Vec::with_capacity(self.stages.len());
        for (i, stage) in self.stages.iter().enumerate() {
            let f = stage.fit(&data, derive_seed(seed, &[i as u64]))?;
            data = f.transform_train(&data)?;
            fitted.push(f);
        }
        let model = self.learner.fit(&data)?;
        Ok(FittedPipeline { stages: fitted, model })
    }
}

impl FittedPipeline {
    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        let mut out = data.clone();
        for s in &self.stages {
            out = s.transform(&out)?;
        }
        Ok(out)
    }

    pub fn predict(&self, data: &Dataset, positive: usize) -> Result<Predictions> {
        let data = self.transform(data)?;
        let labels = data.rows().map(|x| self.model.predict(x)).collect::<Result<Vec<_>>>()?;
        let scores: Option<Vec<f64>> = data.rows().map(|x| self.model.score(x, positive)).collect();
        Ok(Predictions { labels, scores })
    }

    pub fn model(&self) -> &dyn Classifier {
        self.model.as_ref()
    }
}

/// Z-scoring with training-fold means and standard deviations.
#[derive(Debug, Clone, Copy, Default)]
pub struct Standardize;

struct FittedStandardize {
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl Stage for Standardize {
    fn name(&self) -> String {
        "standardize".into()
    }

    fn fit(&self, train: &Dataset, _seed: u64) -> Result<Box<dyn FittedStage>> {
        let (n, d) = (train.n_samples() as f64, train.n_features());
        let mut mean = vec![0.0; d];
        for x in train.rows() {
            mean.iter_mut().zip(x).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; d];
        for x in train.rows() {
            for k in 0..d {
                var[k] += (x[k] - mean[k]).powi(2) / n;
            }
        }
        let sd = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Ok(Box::new(FittedStandardize { mean, sd }))
    }
}

impl FittedStage for FittedStandardize {
    fn transform(&self, data: &Dataset) -> Result<Dataset> {
        if data.n_features() != self.mean.len() {
            return Err(Error::DimensionMismatch { expected: self.mean.len(), got: data.n_features() });
        }
        let d = self.mean.len();
        let features = data.features().iter().enumerate().map(|(i, v)| (v - self.mean[i % d]) / self.sd[i % d]).collect();
        data.with_features(features, d)
    }
}

/// Keep the `k` features with the largest correlation ratio to the class
/// label (the absolute point-biserial correlation for two classes).
#[derive(Debug, Clone, Copy)]
pub struct SelectKBest {
    pub k: usize,
}

struct FittedSelection {
    keep: Vec<usize>,
    n_features: usize,
}

/// Correlation ratio eta² = between-class sum of squares / total.
pub(crate) fn correlation_ratio(data: &Dataset, feature: usize) -> f64 {
    let c = data.class_count();
    let mut sums = vec![0.0; c];
    let mut counts = vec![0usize; c];
    let mut total = 0.0;
    for (x, &y) in data.rows().zip(data.labels()) {
        sums[y] += x[feature];
        counts[y] += 1;
        total += x[feature];
    }
    let n = data.n_samples() as f64;
    let grand = total / n;
    let ss_total: f64 = data.rows().map(|x| (x[feature] - grand).powi(2)).sum();
    if ss_total <= 0.0 {
        return 0.0;
    }
    let ss_between: f64 = (0..c)
        .filter(|&j| counts[j] > 0)
        .map(|j| counts[j] as f64 * (sums[j] / counts[j] as f64 - grand).powi(2))
        .sum();
    ss_between / ss_total
}

impl Stage for SelectKBest {
    fn name(&self) -> String {
        format!("select_k_best(k={})", self.k)
    }

    fn fit(&self, train: &Dataset, _seed: u64) -> Result<Box<dyn FittedStage>> {
        let d = train.n_features();
        if self.k == 0 || self.k > d {
            return Err(Error::invalid(format!("cannot select {} of {d} features", self.k)));
        }
        let scores: Vec<f64> = (0..d).map(|k| correlation_ratio(train, k)).collect();
        let mut order: Vec<usize> = (0..d).collect();
        // Stable: equal scores keep the lower feature index first.
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let mut keep = order[..self.k].to_vec();
        keep.sort_unstable();
        Ok(Box::new(FittedSelection { keep, n_features: d }))
    }
}

impl FittedStage for FittedSelection {
    fn transform(&self, data: &Dataset) -> Result<Dataset> {
        if data.n_features() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: data.n_features() });
        }
        let features = data.rows().flat_map(|x| self.keep.iter().map(move |&k| x[k])).collect();
        let names = self.keep.iter().map(|&k| data.feature_names()[k].clone()).collect();
        data.with_features(features, self.keep.len())?.with_feature_names(names)
    }
}

/// Training-set augmentation: appends `copies` jittered copies of every
/// training row (Gaussian noise scaled by each feature's training standard
/// deviation). Test data passes through untouched.
#[derive(Debug, Clone, Copy)]
pub struct JitterAugment {
    pub copies: usize,
    pub scale: f64,
}

struct FittedJitter {
    sd: Vec<f64>,
    copies: usize,
    seed: u64,
}

impl Stage for JitterAugment {
    fn name(&self) -> String {
        format!("jitter_augment(copies={}, scale={})", self.copies, self.scale)
    }

    fn fit(&self, train: &Dataset, seed: u64) -> Result<Box<dyn FittedStage>> {
        let (n, d) = (train.n_samples() as f64, train.n_features());
        let sd = (0..d)
            .map(|k| {
                let m = train.rows().map(|x| x[k]).sum::<f64>() / n;
                let v = train.rows().map(|x| (x[k] - m).powi(2)).sum::<f64>() / n;
                self.scale * v.sqrt()
            })
            .collect();
        Ok(Box::new(FittedJitter { sd, copies: self.copies, seed }))
    }
}

impl FittedStage for FittedJitter {
    fn transform_train(&self, train: &Dataset) -> Result<Dataset> {
        let mut rng = stream(self.seed, &[]);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut groups = Vec::new();
        for _ in 0..self.copies {
            for (i, x) in train.rows().enumerate() {
                for (v, s) in x.iter().zip(&self.sd) {
                    let z: f64 = rng.sample(StandardNormal);
                    features.push(v + s * z);
                }
                labels.push(train.labels()[i]);
                if let Some(g) = train.groups() {
                    groups.push(g[i].clone());
                }
            }
        }
        train.append_rows(&features, &labels, train.groups().map(|_| groups.as_slice()))
    }

    fn transform(&self, data: &Dataset) -> Result<Dataset> {
        Ok(data.clone())
    }
}

/// Declarative pipeline description used by the CLI and hyperparameter grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    #[serde(default)]
    pub name: Option<String>,
    /// `"gnb"` or `"majority"`.
    pub model: String,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub select_k: Option<usize>,
    #[serde(default)]
    pub augment_copies: Option<usize>,
    #[serde(default)]
    pub priors: Option<Vec<f64>>,
}

impl PipelineSpec {
    pub fn model(model: impl Into<String>) -> Self {
        Self { name: None, model: model.into(), standardize: false, select_k: None, augment_copies: None, priors: None }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            let mut parts = Vec::new();
            if self.standardize {
                parts.push("standardize".to_string());
            }
            if let Some(k) = self.select_k {
                parts.push(format!("select{k}"));
            }
            if let Some(c) = self.augment_copies {
                parts.push(format!("augment{c}"));
            }
            parts.push(self.model.clone());
            parts.join("+")
        })
    }

    pub fn build(&self) -> Result<Pipeline> {
        let mut p = match self.model.as_str() {
            "gnb" => Pipeline::new(GnbLearner {
                priors: self.priors.clone().map(PriorVector::new).transpose()?,
            }),
            "majority" => Pipeline::new(MajorityLearner),
            other => return Err(Error::invalid(format!("unknown model '{other}' (expected gnb or majority)"))),
        };
        if self.standardize {
            p = p.with_stage(Standardize);
        }
        if let Some(k) = self.select_k {
            p = p.with_stage(SelectKBest { k });
        }
        if let Some(copies) = self.augment_copies {
            p = p.with_stage(JitterAugment { copies, scale: 0.05 });
        }
        Ok(p)
    }
}
