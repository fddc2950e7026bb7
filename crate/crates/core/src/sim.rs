//! Monte Carlo comparison of k-fold CV and holdout as estimators of a
//! classifier's accuracy, on Gaussian problems with a fixed Bayes error.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PriorVector};
use crate::models::{gnb_fit, GaussianProblemSpec, GnbModel};
use crate::numeric::{normal_cdf, normal_quantile};
use crate::resampling::{holdout_split, kfold_split, KFoldOptions, SplitPlan};
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};

/// Mahalanobis distance between two equiprobable unit-variance Gaussians
/// whose Bayes error is `target`: `Φ(−Δ/2) = target`.
pub fn separation_for_error(target: f64) -> Result<f64> {
    if !(target > 0.0 && target <= 0.5) {
        return Err(Error::invalid(format!("Bayes error {target} is unattainable for two equiprobable classes")));
    }
    Ok((2.0 * normal_quantile(1.0 - target)).max(0.0))
}

/// Bayes error of the two-class problem with separation `delta`.
pub fn closed_form_error(delta: f64) -> f64 {
    normal_cdf(-0.5 * delta)
}

/// Two equiprobable classes, unit covariance, means `±Δ/(2√d)` on every
/// axis, so the Bayes error does not depend on `d`.
pub fn tune_separation(d: usize, target: f64) -> Result<GaussianProblemSpec> {
    if d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let delta = separation_for_error(target)?;
    let offset = delta / (2.0 * (d as f64).sqrt());
    GaussianProblemSpec::new(vec![vec![-offset; d], vec![offset; d]], vec![1.0; d], PriorVector::uniform(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    Cv { k: usize },
    Holdout { fraction: f64 },
}

impl Estimator {
    pub fn label(&self) -> String {
        match self {
            Estimator::Cv { k } => format!("cv{k}"),
            Estimator::Holdout { fraction } => format!("holdout{}", (fraction * 100.0).round()),
        }
    }

    fn min_train_size(&self) -> usize {
        match self {
            Estimator::Cv { k } => 2 * k,
            Estimator::Holdout { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dimensions: Vec<usize>,
    /// Total training sizes, split evenly between the two classes.
    pub train_sizes: Vec<usize>,
    pub target_error: f64,
    pub repetitions: usize,
    pub test_size: usize,
    pub estimators: Vec<Estimator>,
    pub seed: u64,
}

impl SimConfig {
    /// Desk scale: 200 repetitions, 10⁵ external test samples.
    pub fn desk(seed: u64) -> Self {
        Self {
            dimensions: vec![1, 3, 5, 9],
            train_sizes: vec![50, 100, 200, 400],
            target_error: 0.05,
            repetitions: 200,
            test_size: 100_000,
            estimators: vec![Estimator::Cv { k: 5 }, Estimator::Holdout { fraction: 0.2 }],
            seed,
        }
    }

    /// 1000 repetitions and 10⁶ external test samples.
    pub fn paper_scale(seed: u64) -> Self {
        Self { repetitions: 1000, test_size: 1_000_000, ..Self::desk(seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::invalid("repetitions must be at least 1"));
        }
        if self.test_size == 0 {
            return Err(Error::invalid("external test size must be positive"));
        }
        if self.dimensions.is_empty() || self.dimensions.contains(&0) {
            return Err(Error::invalid("dimensions must be positive"));
        }
        if self.estimators.is_empty() {
            return Err(Error::invalid("no estimators configured"));
        }
        for e in &self.estimators {
            match *e {
                Estimator::Cv { k } if k < 2 => return Err(Error::invalid("CV needs k >= 2")),
                Estimator::Holdout { fraction } if !(fraction > 0.0 && fraction < 1.0) => {
                    return Err(Error::invalid("holdout fraction must lie in (0, 1)"))
                }
                _ => {}
            }
        }
        separation_for_error(self.target_error)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCell {
    pub dimension: usize,
    pub train_size: usize,
    pub estimator: String,
    /// Mean |estimated accuracy − external-test accuracy|.
    pub mae: f64,
    pub bias: f64,
    /// Variance of the estimation error.
    pub variance: f64,
    /// Standard error of `mae`.
    pub mae_se: f64,
    pub repetitions: usize,
    /// Share of repetitions where the estimator saw no errors at all.
    pub zero_error_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flagged: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub config: SimConfig,
    pub cells: Vec<SimCell>,
}

impl SimResult {
    pub fn cell(&self, dimension: usize, train_size: usize, estimator: &str) -> Option<&SimCell> {
        self.cells.iter().find(|c| c.dimension == dimension && c.train_size == train_size && c.estimator == estimator)
    }

    /// `MAE(b) / MAE(a)` for every (dimension, train size) where both are present.
    pub fn mae_ratios(&self, a: &str, b: &str) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for d in &self.config.dimensions {
            for n in &self.config.train_sizes {
                if let (Some(x), Some(y)) = (self.cell(*d, *n, a), self.cell(*d, *n, b)) {
                    if x.flagged.is_none() && y.flagged.is_none() {
                        out.push((*d, *n, y.mae / x.mae));
                    }
                }
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["dimension", "train_size", "estimator", "mae", "bias", "variance", "repetitions", "zero_error_fraction", "flagged"])?;
        for c in &self.cells {
            w.write_record([
                c.dimension.to_string(),
                c.train_size.to_string(),
                c.estimator.clone(),
                c.mae.to_string(),
                c.bias.to_string(),
                c.variance.to_string(),
                c.repetitions.to_string(),
                c.zero_error_fraction.to_string(),
                c.flagged.clone().unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::Io { path: "<csv>".into(), source: e })?;
        Ok(())
    }
}

/// A two-class GNB reduced to `g(x) = Σ a_k x_k² + b_k x_k + c`, class 1
/// when `g > 0`. Evaluating millions of test points this way is several
/// times cheaper than the general discriminants.
struct Quadratic {
    a: Vec<f64>,
    b: Vec<f64>,
    c: f64,
}

impl Quadratic {
    fn new(m: &GnbModel) -> Self {
        let d = m.feature_count;
        let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
        let mut c = m.priors.as_slice()[1].ln() - m.priors.as_slice()[0].ln();
        for k in 0..d {
            let (m0, m1) = (m.means[0][k], m.means[1][k]);
            let (s0, s1) = (m.variances[0][k], m.variances[1][k]);
            a[k] = 0.5 / s0 - 0.5 / s1;
            b[k] = m1 / s1 - m0 / s0;
            c += 0.5 * (s0 / s1).ln() + m0 * m0 / (2.0 * s0) - m1 * m1 / (2.0 * s1);
        }
        Self { a, b, c }
    }

    fn predict(&self, x: &[f64]) -> usize {
        let g = self.c + x.iter().zip(&self.a).zip(&self.b).map(|((x, a), b)| (a * x + b) * x).sum::<f64>();
        usize::from(g > 0.0)
    }

    fn correct(&self, data: &Dataset, rows: impl Iterator<Item = usize>) -> usize {
        rows.filter(|&i| self.predict(data.row(i)) == data.labels()[i]).count()
    }
}

fn plan_correct(train: &Dataset, plan: &SplitPlan) -> Result<(usize, usize)> {
    let (mut correct, mut total) = (0, 0);
    for f in &plan.folds {
        let model = gnb_fit(&train.subset(&f.train))?;
        correct += Quadratic::new(&model).correct(train, f.test.iter().copied());
        total += f.test.len();
    }
    Ok((correct, total))
}

/// One repetition: the estimators' accuracy estimates and the external-test
/// accuracy of the model trained on all of `train`.
fn repetition(train: &Dataset, test: &Dataset, estimators: &[Estimator], seed: u64) -> Result<(Vec<(f64, bool)>, f64)> {
    let full = gnb_fit(train)?;
    let truth = Quadratic::new(&full).correct(test, 0..test.n_samples()) as f64 / test.n_samples() as f64;
    let mut estimates = Vec::with_capacity(estimators.len());
    for (e, est) in estimators.iter().enumerate() {
        let s = derive_seed(seed, &[e as u64]);
        let plan = match *est {
            Estimator::Cv { k } => kfold_split(train, KFoldOptions { k, stratified: true, grouped: false, repeats: 1 }, s)?,
            Estimator::Holdout { fraction } => holdout_split(train, fraction, true, s)?,
        };
        let (correct, total) = plan_correct(train, &plan)?;
        estimates.push((correct as f64 / total as f64, correct == total));
    }
    Ok((estimates, truth))
}

/// Run the CV-versus-holdout study. Each (dimension, train size,
/// repetition) draws its training set from its own stream, and every
/// estimator sees the same training set. One external test set per
/// dimension is shared across repetitions.
pub fn run_estimator_study(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let mut cells = Vec::new();
    for &d in &config.dimensions {
        let problem = tune_separation(d, config.target_error)?;
        let half = config.test_size / 2;
        let test = problem.sample_counts(&[half, config.test_size - half], &mut stream(config.seed, &[d as u64, u64::MAX]));
        for &n in &config.train_sizes {
            let too_small: Vec<&Estimator> = config.estimators.iter().filter(|e| n < e.min_train_size()).collect();
            let runnable: Vec<Estimator> = config.estimators.iter().filter(|e| n >= e.min_train_size()).copied().collect();
            for e in too_small {
                cells.push(flagged_cell(d, n, e, format!("train size {n} is too small for {}", e.label())));
            }
            if runnable.is_empty() {
                continue;
            }
            let outcomes: Vec<Result<(Vec<(f64, bool)>, f64)>> = (0..config.repetitions)
                .into_par_iter()
                .map(|r| {
                    let seed = derive_seed(config.seed, &[d as u64, n as u64, r as u64]);
                    let train = problem.sample_counts(&[n / 2, n - n / 2], &mut stream(seed, &[0]));
                    repetition(&train, &test, &runnable, seed)
                })
                .collect();
            let failures: Vec<String> = outcomes.iter().filter_map(|o| o.as_ref().err().map(|e| e.to_string())).collect();
            if let Some(first) = failures.first() {
                for e in &runnable {
                    cells.push(flagged_cell(d, n, e, format!("{} repetition(s) failed: {first}", failures.len())));
                }
                continue;
            }
            let outcomes: Vec<(Vec<(f64, bool)>, f64)> = outcomes.into_iter().map(|o| o.expect("checked above")).collect();
            for (e, est) in runnable.iter().enumerate() {
                let errors: Vec<f64> = outcomes.iter().map(|(ests, truth)| ests[e].0 - truth).collect();
                let zero = outcomes.iter().filter(|(ests, _)| ests[e].1).count();
                cells.push(summarize(d, n, est, &errors, zero));
            }
        }
    }
    Ok(SimResult { config: config.clone(), cells })
}

fn flagged_cell(d: usize, n: usize, e: &Estimator, why: String) -> SimCell {
    SimCell {
        dimension: d,
        train_size: n,
        estimator: e.label(),
        mae: f64::NAN,
        bias: f64::NAN,
        variance: f64::NAN,
        mae_se: f64::NAN,
        repetitions: 0,
        zero_error_fraction: f64::NAN,
        flagged: Some(why),
    }
}

fn summarize(d: usize, n: usize, e: &Estimator, errors: &[f64], zero: usize) -> SimCell {
    let r = errors.len() as f64;
    let abs: Vec<f64> = errors.iter().map(|x| x.abs()).collect();
    let mae = abs.iter().sum::<f64>() / r;
    let bias = errors.iter().sum::<f64>() / r;
    let (variance, mae_se) = if errors.len() > 1 {
        (crate::numeric::sample_variance(errors), (crate::numeric::sample_variance(&abs) / r).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    SimCell {
        dimension: d,
        train_size: n,
        estimator: e.label(),
        mae,
        bias,
        variance,
        mae_se,
        repetitions: errors.len(),
        zero_error_fraction: zero as f64 / r,
        flagged: None,
    }
}

/// Monte Carlo error of the Bayes classifier on `n` fresh samples.
pub fn monte_carlo_bayes_error(problem: &GaussianProblemSpec, n: usize, seed: u64) -> Result<f64> {
    let data = problem.sample(n, &mut stream(seed, &[]));
    crate::models::error_rate(problem, &data)
}

/// Per-dimension summary rows keyed by estimator, handy for printing.
pub fn summary_table(result: &SimResult) -> BTreeMap<(usize, usize), Vec<(String, f64, f64)>> {
    let mut out: BTreeMap<(usize, usize), Vec<(String, f64, f64)>> = BTreeMap::new();
    for c in &result.cells {
        out.entry((c.dimension, c.train_size)).or_default().push((c.estimator.clone(), c.mae, c.bias));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Classifier;
    use approx::assert_relative_eq;

    #[test]
    fn separation_examples() {
        assert_eq!(separation_for_error(0.5).unwrap(), 0.0);
        let p = tune_separation(4, 0.5).unwrap();
        assert_eq!(p.means[0], p.means[1]);
        let delta = separation_for_error(0.05).unwrap();
        assert!((delta - 3.290).abs() < 5e-4, "{delta}");
        // statrs oracle for the quantile.
        let z = statrs::distribution::ContinuousCDF::inverse_cdf(&statrs::distribution::Normal::new(0.0, 1.0).unwrap(), 0.95);
        assert_relative_eq!(delta, 2.0 * z, max_relative = 1e-9);
        assert_relative_eq!(closed_form_error(delta), 0.05, max_relative = 1e-12);
        for bad in [0.0, -0.1, 0.6, f64::NAN] {
            assert!(tune_separation(3, bad).is_err());
        }
    }

    #[test]
    fn mahalanobis_distance_is_constant_across_dimensions() {
        for d in [1, 3, 5, 9] {
            let p = tune_separation(d, 0.05).unwrap();
            let dist: f64 = p.means[0].iter().zip(&p.means[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert_relative_eq!(dist, separation_for_error(0.05).unwrap(), max_relative = 1e-12);
        }
    }

    #[test]
    fn monte_carlo_bayes_error_matches_target() {
        // 3-sigma at n = 2e5 is about 0.0015.
        for d in [1, 9] {
            let e = monte_carlo_bayes_error(&tune_separation(d, 0.05).unwrap(), 200_000, d as u64).unwrap();
            assert!((e - 0.05).abs() < 0.0015, "d={d}: {e}");
        }
    }

    #[test]
    fn quadratic_form_agrees_with_gnb() {
        let problem = tune_separation(3, 0.05).unwrap();
        let train = problem.sample_counts(&[20, 30], &mut stream(1, &[]));
        let model = gnb_fit(&train).unwrap();
        let q = Quadratic::new(&model);
        let test = problem.sample(5000, &mut stream(2, &[]));
        let agree = test.rows().filter(|x| q.predict(x) == model.predict(x).unwrap()).count();
        assert_eq!(agree, 5000);
    }

    fn small(seed: u64) -> SimConfig {
        SimConfig { dimensions: vec![3], train_sizes: vec![50, 200], repetitions: 40, test_size: 20_000, ..SimConfig::desk(seed) }
    }

    #[test]
    fn study_is_deterministic_and_consistent() {
        let a = run_estimator_study(&small(9)).unwrap();
        let b = run_estimator_study(&small(9)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.cells.len(), 4);
        for c in &a.cells {
            assert!(c.mae + 1e-15 >= c.bias.abs());
            assert_eq!(c.repetitions, 40);
        }
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("dimension,train_size,estimator,mae,bias"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn infeasible_cells_are_flagged() {
        let cfg = SimConfig { dimensions: vec![1], train_sizes: vec![6, 40], repetitions: 5, test_size: 1000, ..SimConfig::desk(1) };
        let r = run_estimator_study(&cfg).unwrap();
        assert!(r.cell(1, 6, "cv5").unwrap().flagged.is_some());
        assert!(r.cell(1, 6, "holdout20").unwrap().flagged.is_none());
        assert!(r.cell(1, 40, "cv5").unwrap().flagged.is_none());
        assert!(run_estimator_study(&SimConfig { repetitions: 0, ..cfg }).is_err());
    }
}
