//! Significance tests for comparing two learners or two AUCs.
//!
//! Every test takes differences as "A minus B": swapping the two sides
//! negates the statistic and leaves the two-sided p-value unchanged.

use serde::{Deserialize, Serialize};

use crate::intervals::DelongComponents;
use crate::numeric::{self, ln_choose};
use crate::roc::ScoreSet;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: String,
    pub statistic: f64,
    /// Two-sided.
    pub p_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
    /// Zero variance: the statistic is undefined and the p-value is set by
    /// convention (1 when the mean difference is zero, else 0).
    pub degenerate: bool,
    pub details: serde_json::Value,
}

/// Discordant pairs below this count use the exact binomial test.
pub const MCNEMAR_EXACT_BELOW: u64 = 25;

/// McNemar's test on paired predictions. `n01` counts records only A gets
/// right, `n10` records only B gets right. The statistic is the signed
/// continuity-corrected z, whose square is the usual chi-square.
pub fn mcnemar(truth: &[usize], predictions_a: &[usize], predictions_b: &[usize]) -> Result<TestResult> {
    if truth.len() != predictions_a.len() {
        return Err(Error::LengthMismatch { left: truth.len(), right: predictions_a.len() });
    }
    if truth.len() != predictions_b.len() {
        return Err(Error::LengthMismatch { left: truth.len(), right: predictions_b.len() });
    }
    let (mut n01, mut n10) = (0u64, 0u64);
    for ((t, a), b) in truth.iter().zip(predictions_a).zip(predictions_b) {
        match (a == t, b == t) {
            (true, false) => n01 += 1,
            (false, true) => n10 += 1,
            _ => {}
        }
    }
    Ok(mcnemar_from_counts(n01, n10))
}

pub fn mcnemar_from_counts(n01: u64, n10: u64) -> TestResult {
    let n = n01 + n10;
    let details = serde_json::json!({ "n01": n01, "n10": n10, "exact": n < MCNEMAR_EXACT_BELOW });
    if n == 0 {
        return TestResult { test: "mcnemar".into(), statistic: 0.0, p_value: 1.0, df: Some(1.0), degenerate: true, details };
    }
    let diff = n01 as f64 - n10 as f64;
    let statistic = diff.signum() * (diff.abs() - 1.0).max(0.0) / (n as f64).sqrt();
    let p_value = if n < MCNEMAR_EXACT_BELOW {
        let k = n01.min(n10);
        let tail: f64 = (0..=k).map(|i| (ln_choose(n, i) - n as f64 * std::f64::consts::LN_2).exp()).sum();
        (2.0 * tail).min(1.0)
    } else {
        numeric::chi2_1_sf(statistic * statistic)
    };
    TestResult { test: "mcnemar".into(), statistic, p_value, df: Some(1.0), degenerate: false, details }
}

fn zero_variance(var: f64, values: &[f64]) -> bool {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    var <= (1e-12 * scale).powi(2)
}

fn t_test(name: &str, diffs: &[f64], correction: f64, details: serde_json::Value) -> Result<TestResult> {
    if diffs.len() < 2 {
        return Err(Error::invalid(format!("{name} needs at least two differences")));
    }
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::invalid("differences must be finite"));
    }
    let j = diffs.len() as f64;
    let mean = numeric::mean(diffs);
    let var = numeric::sample_variance(diffs);
    let df = Some(j - 1.0);
    if zero_variance(var, diffs) {
        let zero_mean = mean.abs() <= 1e-12 * diffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let statistic = if zero_mean { 0.0 } else { mean.signum() * f64::INFINITY };
        let p_value = if zero_mean { 1.0 } else { 0.0 };
        return Ok(TestResult { test: name.into(), statistic, p_value, df, degenerate: true, details });
    }
    let t = mean / ((1.0 / j + correction) * var).sqrt();
    Ok(TestResult { test: name.into(), statistic: t, p_value: numeric::student_t_two_sided(t, j - 1.0), df, degenerate: false, details })
}

fn check_sizes(n_train: usize, n_test: usize) -> Result<()> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::invalid("train and test sizes must be positive"));
    }
    Ok(())
}

/// Corrected resampled t-test over J random train/test splits: the variance
/// term is inflated by `n_test / n_train` to account for overlapping
/// training sets.
pub fn corrected_resampled_t(differences: &[f64], n_train: usize, n_test: usize) -> Result<TestResult> {
    check_sizes(n_train, n_test)?;
    let details = serde_json::json!({ "repetitions": differences.len(), "n_train": n_train, "n_test": n_test });
    t_test("corrected_resampled_t", differences, n_test as f64 / n_train as f64, details)
}

/// The naive resampled t-test that treats repetitions as independent. Kept
/// as a reference: its type I error is far above nominal.
pub fn uncorrected_resampled_t(differences: &[f64]) -> Result<TestResult> {
    let details = serde_json::json!({ "repetitions": differences.len() });
    t_test("uncorrected_resampled_t", differences, 0.0, details)
}

/// Corrected repeated k-fold CV test. `differences[r][f]` is the difference
/// on fold `f` of repeat `r`; all r·k values enter one corrected t-test with
/// r·k − 1 degrees of freedom.
pub fn corrected_repeated_kfold_t(differences: &[Vec<f64>], n_train: usize, n_test: usize) -> Result<TestResult> {
    check_sizes(n_train, n_test)?;
    let k = differences.first().map_or(0, Vec::len);
    if k == 0 || differences.iter().any(|r| r.len() != k) {
        return Err(Error::invalid("every repeat must hold the same positive number of folds"));
    }
    let flat: Vec<f64> = differences.iter().flatten().copied().collect();
    let details = serde_json::json!({ "repeats": differences.len(), "folds": k, "n_train": n_train, "n_test": n_test });
    t_test("corrected_repeated_kfold_t", &flat, n_test as f64 / n_train as f64, details)
}

/// Dietterich's 5x2 CV paired t-test. `differences[i]` holds the two fold
/// differences of replication `i`.
pub fn five_by_two_cv_test(differences: &[[f64; 2]]) -> Result<TestResult> {
    if differences.len() != 5 {
        return Err(Error::invalid(format!("5x2 CV test needs 5 replications, got {}", differences.len())));
    }
    let flat: Vec<f64> = differences.iter().flatten().copied().collect();
    if flat.iter().any(|d| !d.is_finite()) {
        return Err(Error::invalid("differences must be finite"));
    }
    let s2: f64 = differences
        .iter()
        .map(|[a, b]| {
            let m = 0.5 * (a + b);
            (a - m).powi(2) + (b - m).powi(2)
        })
        .sum();
    let d11 = differences[0][0];
    let details = serde_json::json!({ "replications": 5, "folds": 2 });
    let df = Some(5.0);
    if zero_variance(s2 / 5.0, &flat) {
        let zero = d11 == 0.0;
        return Ok(TestResult {
            test: "five_by_two_cv".into(),
            statistic: if zero { 0.0 } else { d11.signum() * f64::INFINITY },
            p_value: if zero { 1.0 } else { 0.0 },
            df,
            degenerate: true,
            details,
        });
    }
    let t = d11 / (s2 / 5.0).sqrt();
    Ok(TestResult { test: "five_by_two_cv".into(), statistic: t, p_value: numeric::student_t_two_sided(t, 5.0), df, degenerate: false, details })
}

/// DeLong's test for two correlated AUCs measured on the same records.
pub fn delong_test(scores_a: &ScoreSet, scores_b: &ScoreSet) -> Result<TestResult> {
    if scores_a.len() != scores_b.len() {
        return Err(Error::LengthMismatch { left: scores_a.len(), right: scores_b.len() });
    }
    if scores_a.truth() != scores_b.truth() {
        return Err(Error::invalid("score sets must share the same truth labels"));
    }
    let a = DelongComponents::new(scores_a)?;
    let b = DelongComponents::new(scores_b)?;
    let (va, vb, cov) = (a.variance()?, b.variance()?, a.covariance(&b)?);
    let var = va + vb - 2.0 * cov;
    let diff = a.auc - b.auc;
    let details = serde_json::json!({
        "auc_a": a.auc, "auc_b": b.auc, "var_a": va, "var_b": vb, "covariance": cov,
        "n_pos": scores_a.n_pos(), "n_neg": scores_a.n_neg(),
    });
    if var <= 1e-15 * (va + vb).max(f64::MIN_POSITIVE) {
        let zero = diff == 0.0;
        return Ok(TestResult {
            test: "delong".into(),
            statistic: if zero { 0.0 } else { diff.signum() * f64::INFINITY },
            p_value: if zero { 1.0 } else { 0.0 },
            df: None,
            degenerate: true,
            details,
        });
    }
    let z = diff / var.sqrt();
    Ok(TestResult { test: "delong".into(), statistic: z, p_value: numeric::normal_two_sided(z), df: None, degenerate: false, details })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::roc::auc;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn preds(n01: usize, n10: usize, agree: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let mut t = Vec::new();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for _ in 0..n01 {
            t.push(1);
            a.push(1);
            b.push(0);
        }
        for _ in 0..n10 {
            t.push(1);
            a.push(0);
            b.push(1);
        }
        for i in 0..agree {
            t.push(i % 2);
            a.push(i % 2);
            b.push(i % 2);
        }
        (t, a, b)
    }

    #[test]
    fn mcnemar_examples() {
        let (t, a, _) = preds(0, 0, 30);
        let r = mcnemar(&t, &a, &a).unwrap();
        assert_eq!(r.p_value, 1.0);

        let (t, a, b) = preds(10, 10, 5);
        let r = mcnemar(&t, &a, &b).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.p_value > 0.95);

        // Exact tail: 2 * (1 + 16) / 2^16.
        let (t, a, b) = preds(15, 1, 0);
        let r = mcnemar(&t, &a, &b).unwrap();
        assert_relative_eq!(r.p_value, 34.0 / 65536.0, max_relative = 1e-12);
        assert!((r.p_value - 0.0005).abs() < 0.0001);

        assert!(mcnemar(&[0, 1], &[0], &[0, 1]).is_err());
    }

    #[test]
    fn mcnemar_large_sample_uses_chi_square() {
        let r = mcnemar_from_counts(30, 10);
        let chi2 = (20.0f64 - 1.0).powi(2) / 40.0;
        assert_relative_eq!(r.statistic * r.statistic, chi2, max_relative = 1e-12);
        let oracle = 1.0 - statrs::distribution::ContinuousCDF::cdf(&statrs::distribution::ChiSquared::new(1.0).unwrap(), chi2);
        assert_relative_eq!(r.p_value, oracle, max_relative = 1e-8);
    }

    #[test]
    fn resampled_t_examples() {
        let r = corrected_resampled_t(&[0.0; 10], 90, 10).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));

        let d = [0.02, 0.05, -0.01, 0.03, 0.04, 0.00, 0.06];
        let naive = uncorrected_resampled_t(&d).unwrap().statistic.abs();
        let small = corrected_resampled_t(&d, 90, 10).unwrap().statistic.abs();
        let large = corrected_resampled_t(&d, 50, 50).unwrap().statistic.abs();
        assert!(large < small && small < naive);

        // Oracle: direct formula with statrs for the tail.
        let j = d.len() as f64;
        let m = d.iter().sum::<f64>() / j;
        let v = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (j - 1.0);
        let t = m / ((1.0 / j + 10.0 / 90.0) * v).sqrt();
        let r = corrected_resampled_t(&d, 90, 10).unwrap();
        assert_relative_eq!(r.statistic, t, max_relative = 1e-12);
        let dist = statrs::distribution::StudentsT::new(0.0, 1.0, j - 1.0).unwrap();
        let p = 2.0 * (1.0 - statrs::distribution::ContinuousCDF::cdf(&dist, t.abs()));
        assert_relative_eq!(r.p_value, p, max_relative = 1e-8);
        assert_eq!(r.df, Some(6.0));
    }

    #[test]
    fn degenerate_cases_are_flagged() {
        let r = corrected_repeated_kfold_t(&[vec![0.1; 5], vec![0.1; 5]], 80, 20).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 0.0);
        let r = corrected_resampled_t(&[0.0, 0.0, 0.0], 80, 20).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
        assert!(corrected_resampled_t(&[0.1], 80, 20).is_err());
        assert!(corrected_repeated_kfold_t(&[vec![0.1, 0.2], vec![0.3]], 80, 20).is_err());
    }

    #[test]
    fn single_repeat_kfold_equals_resampled() {
        let d = vec![0.01, -0.03, 0.02, 0.05, 0.0];
        let a = corrected_repeated_kfold_t(&[d.clone()], 80, 20).unwrap();
        let b = corrected_resampled_t(&d, 80, 20).unwrap();
        assert_eq!((a.statistic, a.p_value, a.df), (b.statistic, b.p_value, b.df));
    }

    #[test]
    fn five_by_two_examples() {
        let r = five_by_two_cv_test(&[[0.0; 2]; 5]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);

        let d = [[0.0, 0.04], [0.01, -0.02], [0.03, 0.0], [-0.01, 0.02], [0.02, 0.02]];
        let r = five_by_two_cv_test(&d).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        assert!(!r.degenerate);

        let d = [[0.05, 0.04], [0.01, -0.02], [0.03, 0.0], [-0.01, 0.02], [0.02, 0.02]];
        let s2: f64 = d.iter().map(|[a, b]| (a - b) * (a - b) / 2.0).sum();
        let r = five_by_two_cv_test(&d).unwrap();
        assert_relative_eq!(r.statistic, 0.05 / (s2 / 5.0).sqrt(), max_relative = 1e-12);
        assert!(five_by_two_cv_test(&d[..4]).is_err());
    }

    #[test]
    fn delong_identical_and_monotone_transform() {
        let s = ScoreSet::new(vec![0.9, 0.8, 0.3, 0.6, 0.2, 0.4], vec![true, true, true, false, false, false]).unwrap();
        let r = delong_test(&s, &s).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
        let t = ScoreSet::new(s.scores().iter().map(|x| x.exp() * 3.0).collect(), s.truth().to_vec()).unwrap();
        let r = delong_test(&s, &t).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    fn scorer_pair(seed: u64, n: usize) -> (ScoreSet, ScoreSet) {
        // Binormal scorer with separation 1.8119 has AUC Φ(1.8119/√2) ≈ 0.9.
        let mut rng = stream(seed, &[]);
        let truth: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let a = truth.iter().map(|&t| rng.sample::<f64, _>(StandardNormal) + if t { 1.8119 } else { 0.0 }).collect();
        let b = truth.iter().map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        (ScoreSet::new(a, truth.clone()).unwrap(), ScoreSet::new(b, truth).unwrap())
    }

    #[test]
    fn delong_separates_strong_from_random_scorer() {
        let (a, b) = scorer_pair(21, 200);
        let r = delong_test(&a, &b).unwrap();
        assert!(r.p_value < 0.001, "{}", r.p_value);
        assert_eq!(r.details["auc_a"].as_f64().unwrap(), auc(&a).unwrap());

        // Paired bootstrap oracle for the standard error of the difference,
        // resampling within each class.
        let (pos, neg): (Vec<usize>, Vec<usize>) = (0..a.len()).partition(|&i| a.truth()[i]);
        let mut rng = stream(22, &[]);
        let diffs: Vec<f64> = (0..2000)
            .map(|_| {
                let mut idx: Vec<usize> = pos.iter().map(|_| pos[rng.random_range(0..pos.len())]).collect();
                idx.extend(neg.iter().map(|_| neg[rng.random_range(0..neg.len())]));
                let pick = |s: &ScoreSet| ScoreSet::new(idx.iter().map(|&i| s.scores()[i]).collect(), idx.iter().map(|&i| s.truth()[i]).collect()).unwrap();
                auc(&pick(&a)).unwrap() - auc(&pick(&b)).unwrap()
            })
            .collect();
        let se = numeric::sample_variance(&diffs).sqrt();
        let z_boot = (auc(&a).unwrap() - auc(&b).unwrap()) / se;
        assert!((r.statistic - z_boot).abs() / z_boot.abs() < 0.15, "{} vs {}", r.statistic, z_boot);
    }

    proptest! {
        #[test]
        fn tests_are_antisymmetric(d in prop::collection::vec(-0.2f64..0.2, 10)) {
            let neg: Vec<f64> = d.iter().map(|x| -x).collect();
            let a = corrected_resampled_t(&d, 90, 10).unwrap();
            let b = corrected_resampled_t(&neg, 90, 10).unwrap();
            prop_assert!((a.statistic + b.statistic).abs() < 1e-9 * a.statistic.abs().max(1.0));
            prop_assert!((a.p_value - b.p_value).abs() < 1e-12);

            let pairs: Vec<[f64; 2]> = d.chunks(2).map(|c| [c[0], c[1]]).collect();
            let negp: Vec<[f64; 2]> = pairs.iter().map(|[x, y]| [-x, -y]).collect();
            let a = five_by_two_cv_test(&pairs).unwrap();
            let b = five_by_two_cv_test(&negp).unwrap();
            prop_assert!((a.statistic + b.statistic).abs() < 1e-9 * a.statistic.abs().max(1.0));
            prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
        }

        #[test]
        fn mcnemar_antisymmetric(n01 in 0u64..60, n10 in 0u64..60) {
            let a = mcnemar_from_counts(n01, n10);
            let b = mcnemar_from_counts(n10, n01);
            prop_assert_eq!(a.statistic, -b.statistic);
            prop_assert_eq!(a.p_value, b.p_value);
            prop_assert!((0.0..=1.0).contains(&a.p_value));
        }

        #[test]
        fn delong_antisymmetric(seed in 0u64..1000) {
            let (a, b) = scorer_pair(seed, 40);
            let x = delong_test(&a, &b).unwrap();
            let y = delong_test(&b, &a).unwrap();
            prop_assert!((x.statistic + y.statistic).abs() < 1e-9);
            prop_assert!((x.p_value - y.p_value).abs() < 1e-12);
        }

        #[test]
        fn p_monotone_in_statistic(t1 in 0.0f64..8.0, t2 in 0.0f64..8.0, df in 1.0f64..50.0) {
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(numeric::student_t_two_sided(hi, df) <= numeric::student_t_two_sided(lo, df) + 1e-15);
        }
    }
}
