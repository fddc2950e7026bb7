//! Reference learners: Gaussian naive Bayes, the majority-class baseline,
//! and the Bayes-optimal rule for a known Gaussian problem.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{priors_from_labels, Dataset, PriorVector};
use crate::{Error, Result};

/// A fitted classifier. Fitted models are immutable.
pub trait Classifier: Send + Sync {
    fn class_count(&self) -> usize;

    fn predict(&self, x: &[f64]) -> Result<usize>;

    /// Continuous score for `positive` (higher = more likely), used for ROC
    /// analysis. `None` when the model has no meaningful score.
    fn score(&self, x: &[f64], positive: usize) -> Option<f64>;
}

/// Something that turns training data into a [`Classifier`].
pub trait Learner: Send + Sync {
    fn name(&self) -> String;

    fn fit(&self, train: &Dataset) -> Result<Box<dyn Classifier>>;
}

/// Fitted Gaussian naive Bayes: per-class, per-feature means and variances
/// (1/n_j normalization) and class priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbModel {
    pub class_count: usize,
    pub feature_count: usize,
    /// `means[j][k]`: class `j`, feature `k`.
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub priors: PriorVector,
    /// (class, feature) cells whose variance hit the floor.
    pub floored: Vec<(usize, usize)>,
}

/// Fit with priors estimated from the training labels.
pub fn gnb_fit(train: &Dataset) -> Result<GnbModel> {
    let priors = priors_from_labels(train.labels(), train.class_count())?;
    gnb_fit_with_priors(train, priors)
}

/// Fit with externally supplied priors, for separately sampled classes whose
/// training proportions say nothing about prevalence.
pub fn gnb_fit_with_priors(train: &Dataset, priors: PriorVector) -> Result<GnbModel> {
    let (c, d) = (train.class_count(), train.n_features());
    if priors.len() != c {
        return Err(Error::LengthMismatch { left: priors.len(), right: c });
    }
    let counts = train.class_counts();
    if let Some(missing) = counts.iter().position(|&n| n == 0) {
        return Err(Error::invalid(format!("class {missing} has no training samples")));
    }
    let mut means = vec![vec![0.0; d]; c];
    for (x, &y) in train.rows().zip(train.labels()) {
        for (m, v) in means[y].iter_mut().zip(x) {
            *m += v;
        }
    }
    for (row, &n) in means.iter_mut().zip(&counts) {
        row.iter_mut().for_each(|m| *m /= n as f64);
    }
    let mut variances = vec![vec![0.0; d]; c];
    for (x, &y) in train.rows().zip(train.labels()) {
        for k in 0..d {
            variances[y][k] += (x[k] - means[y][k]).powi(2);
        }
    }
    for (row, &n) in variances.iter_mut().zip(&counts) {
        row.iter_mut().for_each(|s| *s /= n as f64);
    }

    // Floor: 1e-9 x (global variance of the feature + 1e-12).
    let n = train.n_samples() as f64;
    let mut floored = Vec::new();
    for k in 0..d {
        let mean_k = train.rows().map(|x| x[k]).sum::<f64>() / n;
        let var_k = train.rows().map(|x| (x[k] - mean_k).powi(2)).sum::<f64>() / n;
        let floor = 1e-9 * (var_k + 1e-12);
        for (j, row) in variances.iter_mut().enumerate() {
            if row[k] < floor {
                row[k] = floor;
                floored.push((j, k));
            }
        }
    }
    Ok(GnbModel { class_count: c, feature_count: d, means, variances, priors, floored })
}

impl GnbModel {
    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_count {
            return Err(Error::DimensionMismatch { expected: self.feature_count, got: x.len() });
        }
        Ok(())
    }

    /// `log f_j = sum_k log G(x_k; m_jk, s_jk) + log P(j)` for every class.
    pub fn log_discriminants(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok((0..self.class_count)
            .map(|j| {
                let log_lik: f64 = x
                    .iter()
                    .zip(&self.means[j])
                    .zip(&self.variances[j])
                    .map(|((z, m), s)| -0.5 * (2.0 * PI * s).ln() - (z - m).powi(2) / (2.0 * s))
                    .sum();
                log_lik + self.priors.as_slice()[j].ln()
            })
            .collect())
    }

    /// Class with the largest discriminant (lowest index on ties), together
    /// with the log discriminants.
    pub fn predict_with_discriminants(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let f = self.log_discriminants(x)?;
        Ok((argmax_first(&f), f))
    }

    /// Posterior class probabilities, normalized in log space.
    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        let f = self.log_discriminants(x)?;
        let max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = f.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = w.iter().sum();
        Ok(w.into_iter().map(|v| v / total).collect())
    }

    /// Posterior of class 1 in a two-class model: `f_1 / (f_0 + f_1)`.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if self.class_count != 2 {
            return Err(Error::invalid(format!("score needs a two-class model, got {} classes", self.class_count)));
        }
        let f = self.log_discriminants(x)?;
        Ok(logistic(f[1] - f[0]))
    }
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl Classifier for GnbModel {
    fn class_count(&self) -> usize {
        self.class_count
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        self.predict_with_discriminants(x).map(|(c, _)| c)
    }

    fn score(&self, x: &[f64], positive: usize) -> Option<f64> {
        self.posterior(x).ok()?.get(positive).copied()
    }
}

/// Learner wrapper for [`gnb_fit`], with an optional prior override.
#[derive(Debug, Clone, Default)]
pub struct GnbLearner {
    pub priors: Option<PriorVector>,
}

impl Learner for GnbLearner {
    fn name(&self) -> String {
        "gnb".into()
    }

    fn fit(&self, train: &Dataset) -> Result<Box<dyn Classifier>> {
        let model = match &self.priors {
            Some(p) => gnb_fit_with_priors(train, p.clone())?,
            None => gnb_fit(train)?,
        };
        Ok(Box::new(model))
    }
}

/// Predicts the modal training class for every input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorityModel {
    pub class: usize,
    pub class_count: usize,
}

/// Modal class of `labels`, ties going to the lower class index.
pub fn majority_predict(labels: &[usize], class_count: usize) -> Result<MajorityModel> {
    if labels.is_empty() {
        return Err(Error::invalid("majority classifier needs training labels"));
    }
    let mut counts = vec![0usize; class_count];
    for &l in labels {
        if l >= class_count {
            return Err(Error::LabelOutOfRange { label: l, class_count });
        }
        counts[l] += 1;
    }
    let class = counts.iter().enumerate().fold(0, |best, (i, &c)| if c > counts[best] { i } else { best });
    Ok(MajorityModel { class, class_count })
}

impl Classifier for MajorityModel {
    fn class_count(&self) -> usize {
        self.class_count
    }

    fn predict(&self, _x: &[f64]) -> Result<usize> {
        Ok(self.class)
    }

    fn score(&self, _x: &[f64], positive: usize) -> Option<f64> {
        Some(if positive == self.class { 1.0 } else { 0.0 })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MajorityLearner;

impl Learner for MajorityLearner {
    fn name(&self) -> String {
        "majority".into()
    }

    fn fit(&self, train: &Dataset) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(majority_predict(train.labels(), train.class_count())?))
    }
}

/// A known classification problem: Gaussian classes with a shared diagonal
/// covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianProblemSpec {
    pub means: Vec<Vec<f64>>,
    /// Shared diagonal covariance.
    pub variances: Vec<f64>,
    pub priors: PriorVector,
}

impl GaussianProblemSpec {
    pub fn new(means: Vec<Vec<f64>>, variances: Vec<f64>, priors: PriorVector) -> Result<Self> {
        let d = variances.len();
        if d == 0 {
            return Err(Error::invalid("problem needs at least one dimension"));
        }
        if variances.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::invalid("covariance entries must be positive"));
        }
        if means.len() != priors.len() || means.len() < 2 {
            return Err(Error::invalid("need one mean vector per class and at least two classes"));
        }
        if let Some(m) = means.iter().find(|m| m.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: m.len() });
        }
        Ok(Self { means, variances, priors })
    }

    pub fn dimension(&self) -> usize {
        self.variances.len()
    }

    pub fn class_count(&self) -> usize {
        self.means.len()
    }

    /// `log p(x | j) + log P(j)`.
    pub fn log_joint(&self, x: &[f64], class: usize) -> f64 {
        let log_lik: f64 = x
            .iter()
            .zip(&self.means[class])
            .zip(&self.variances)
            .map(|((z, m), s)| -0.5 * (2.0 * PI * s).ln() - (z - m).powi(2) / (2.0 * s))
            .sum();
        log_lik + self.priors.as_slice()[class].ln()
    }

    /// Draw `n` labelled samples, classes drawn from the priors.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Dataset {
        let priors = self.priors.as_slice();
        let labels: Vec<usize> = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (j, p) in priors.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return j;
                    }
                }
                priors.len() - 1
            })
            .collect();
        self.sample_labels(labels, rng)
    }

    /// Draw exactly `per_class[j]` samples of each class, classes interleaved
    /// in a fixed order.
    pub fn sample_counts<R: Rng + ?Sized>(&self, per_class: &[usize], rng: &mut R) -> Dataset {
        let mut labels = Vec::with_capacity(per_class.iter().sum());
        let max = per_class.iter().copied().max().unwrap_or(0);
        for i in 0..max {
            for (j, &n) in per_class.iter().enumerate() {
                if i < n {
                    labels.push(j);
                }
            }
        }
        self.sample_labels(labels, rng)
    }

    fn sample_labels<R: Rng + ?Sized>(&self, labels: Vec<usize>, rng: &mut R) -> Dataset {
        let d = self.dimension();
        let sds: Vec<f64> = self.variances.iter().map(|v| v.sqrt()).collect();
        let mut features = Vec::with_capacity(labels.len() * d);
        for &y in &labels {
            for k in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                features.push(self.means[y][k] + sds[k] * z);
            }
        }
        Dataset::from_flat(features, d, labels, self.class_count()).expect("sampled data is well formed")
    }
}

/// The Bayes classifier: `argmax_j p(x | j) P(j)`.
pub fn bayes_optimal_predict(problem: &GaussianProblemSpec, x: &[f64]) -> Result<usize> {
    if x.len() != problem.dimension() {
        return Err(Error::DimensionMismatch { expected: problem.dimension(), got: x.len() });
    }
    let f: Vec<f64> = (0..problem.class_count()).map(|j| problem.log_joint(x, j)).collect();
    Ok(argmax_first(&f))
}

impl Classifier for GaussianProblemSpec {
    fn class_count(&self) -> usize {
        GaussianProblemSpec::class_count(self)
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        bayes_optimal_predict(self, x)
    }

    fn score(&self, x: &[f64], positive: usize) -> Option<f64> {
        let f: Vec<f64> = (0..GaussianProblemSpec::class_count(self)).map(|j| self.log_joint(x, j)).collect();
        let max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = f.iter().map(|v| (v - max).exp()).sum();
        Some((f[positive] - max).exp() / total)
    }
}

/// Fraction of rows of `data` that `model` misclassifies.
pub fn error_rate(model: &dyn Classifier, data: &Dataset) -> Result<f64> {
    let mut wrong = 0usize;
    for (x, &y) in data.rows().zip(data.labels()) {
        if model.predict(x)? != y {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / data.n_samples() as f64)
}
