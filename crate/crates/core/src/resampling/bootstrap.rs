use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluate::MetricSpec;
use super::pipeline::Pipeline;
use crate::data::Dataset;
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};

/// `n` indices drawn uniformly with replacement.
pub fn bootstrap_indices<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Fraction of `0..n` that appears at least once in `sample`.
pub fn distinct_fraction(sample: &[usize], n: usize) -> f64 {
    let mut seen = vec![false; n];
    for &i in sample {
        seen[i] = true;
    }
    seen.iter().filter(|&&s| s).count() as f64 / n as f64
}

pub fn estimate_632(resubstitution_error: f64, oob_error: f64) -> f64 {
    0.368 * resubstitution_error + 0.632 * oob_error
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub replicates: usize,
    pub seed: u64,
    /// Misclassification rate over all out-of-bag predictions, so each
    /// replicate is weighted by its out-of-bag count.
    pub oob_error: f64,
    pub resubstitution_error: f64,
    pub estimate_632: f64,
    pub used_replicates: usize,
    /// Replicates whose sample contained every row (no out-of-bag records).
    pub skipped_replicates: usize,
    pub failed_replicates: Vec<(usize, String)>,
    pub mean_distinct_fraction: f64,
    pub warnings: Vec<String>,
}

enum Replicate {
    Skipped(f64),
    Failed(String),
    Done { wrong: usize, total: usize, distinct: f64 },
}

/// Out-of-bag and .632 bootstrap estimates of the misclassification error.
/// Replicate `b` draws from its own stream, so results do not depend on
/// scheduling.
pub fn bootstrap_oob(ds: &Dataset, pipeline: &Pipeline, m: usize, spec: &MetricSpec, seed: u64) -> Result<BootstrapReport> {
    let n = ds.n_samples();
    if m == 0 {
        return Err(Error::invalid("at least one bootstrap replicate is required"));
    }
    if n < 2 {
        return Err(Error::invalid("bootstrap needs at least two samples"));
    }
    let outcomes: Vec<Replicate> = (0..m)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, &[b as u64]);
            let sample = bootstrap_indices(n, &mut rng);
            let distinct = distinct_fraction(&sample, n);
            let mut in_bag = vec![false; n];
            for &i in &sample {
                in_bag[i] = true;
            }
            let oob: Vec<usize> = (0..n).filter(|&i| !in_bag[i]).collect();
            if oob.is_empty() {
                return Replicate::Skipped(distinct);
            }
            let run = || -> Result<usize> {
                let fitted = pipeline.fit(&ds.subset(&sample), derive_seed(seed, &[b as u64, 1]))?;
                let test = ds.subset(&oob);
                let pred = fitted.predict(&test, spec.positive)?;
                Ok(pred.labels.iter().zip(test.labels()).filter(|(p, t)| p != t).count())
            };
            match run() {
                Ok(wrong) => Replicate::Done { wrong, total: oob.len(), distinct },
                Err(e) => Replicate::Failed(e.to_string()),
            }
        })
        .collect();

    let (mut wrong, mut total, mut used, mut skipped) = (0usize, 0usize, 0usize, 0usize);
    let mut failed = Vec::new();
    let mut distinct_sum = 0.0;
    for (b, r) in outcomes.into_iter().enumerate() {
        match r {
            Replicate::Skipped(d) => {
                skipped += 1;
                distinct_sum += d;
            }
            Replicate::Failed(msg) => failed.push((b, msg)),
            Replicate::Done { wrong: w, total: t, distinct } => {
                wrong += w;
                total += t;
                used += 1;
                distinct_sum += distinct;
            }
        }
    }
    let mut warnings = Vec::new();
    if skipped > 0 {
        warnings.push(format!("{skipped} replicate(s) had no out-of-bag records and were skipped"));
    }
    if !failed.is_empty() {
        warnings.push(format!("{} replicate(s) failed", failed.len()));
    }
    if used == 0 {
        return Err(Error::Learner("no bootstrap replicate produced out-of-bag predictions".into()));
    }
    let oob_error = wrong as f64 / total as f64;

    let fitted = pipeline.fit(ds, derive_seed(seed, &[u64::MAX]))?;
    let pred = fitted.predict(ds, spec.positive)?;
    let resub_wrong = pred.labels.iter().zip(ds.labels()).filter(|(p, t)| p != t).count();
    let resubstitution_error = resub_wrong as f64 / n as f64;

    Ok(BootstrapReport {
        replicates: m,
        seed,
        oob_error,
        resubstitution_error,
        estimate_632: estimate_632(resubstitution_error, oob_error),
        used_replicates: used,
        skipped_replicates: skipped,
        mean_distinct_fraction: distinct_sum / (m - failed.len()) as f64,
        failed_replicates: failed,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GnbLearner, MajorityLearner};

    #[test]
    fn estimate_632_formula() {
        assert!((estimate_632(0.0, 0.10) - 0.0632).abs() < 1e-15);
        assert_eq!(estimate_632(0.2, 0.2), 0.368 * 0.2 + 0.632 * 0.2);
    }

    #[test]
    fn distinct_fraction_near_one_minus_inv_e() {
        let n = 1000;
        let mean: f64 = (0..100).map(|b| distinct_fraction(&bootstrap_indices(n, &mut stream(11, &[b])), n)).sum::<f64>() / 100.0;
        assert!((mean - 0.632).abs() < 0.01, "{mean}");
    }

    #[test]
    fn full_coverage_replicate_is_skipped() {
        // With n = 2 a replicate covers both rows half the time; find a seed where m = 1 does.
        let ds = Dataset::new(vec![vec![0.0], vec![1.0]], vec![0, 1], 2).unwrap();
        let seed = (0..100u64)
            .find(|&s| distinct_fraction(&bootstrap_indices(2, &mut stream(s, &[0])), 2) == 1.0)
            .unwrap();
        // Nothing left to estimate from: reported as an error, not a silent zero.
        assert!(bootstrap_oob(&ds, &Pipeline::new(MajorityLearner), 1, &MetricSpec::default(), seed).is_err());
        let mut seeds_both = (0..100u64).filter(|&s| {
            let a = distinct_fraction(&bootstrap_indices(2, &mut stream(s, &[0])), 2);
            let b = distinct_fraction(&bootstrap_indices(2, &mut stream(s, &[1])), 2);
            a == 1.0 && b < 1.0
        });
        let s = seeds_both.next().unwrap();
        let r = bootstrap_oob(&ds, &Pipeline::new(MajorityLearner), 2, &MetricSpec::default(), s).unwrap();
        assert_eq!(r.skipped_replicates, 1);
        assert_eq!(r.used_replicates, 1);
    }

    #[test]
    fn report_is_consistent_and_deterministic() {
        let rows = (0..60).map(|i| vec![(i % 2) as f64 * 2.0 + (i as f64 * 0.37).sin()]).collect();
        let ds = Dataset::new(rows, (0..60).map(|i| i % 2).collect(), 2).unwrap();
        let p = Pipeline::new(GnbLearner::default());
        let a = bootstrap_oob(&ds, &p, 30, &MetricSpec::default(), 5).unwrap();
        let b = bootstrap_oob(&ds, &p, 30, &MetricSpec::default(), 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.estimate_632, estimate_632(a.resubstitution_error, a.oob_error));
        assert_eq!(a.used_replicates + a.skipped_replicates, 30);
        assert!(a.oob_error >= a.resubstitution_error);
    }
}
