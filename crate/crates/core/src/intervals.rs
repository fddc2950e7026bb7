//! Confidence intervals for proportions and for the AUC.

use serde::{Deserialize, Serialize};

use crate::numeric::{self, beta_quantile, normal_quantile};
use crate::roc::{placement, ScoreSet};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Wald,
    Wilson,
    ClopperPearson,
    HanleyMcneil,
    Delong,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: CiMethod,
}

impl ConfidenceInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("confidence level {level} outside (0, 1)")))
    }
}

/// Two-sided normal critical value for `level`.
pub fn z_critical(level: f64) -> f64 {
    normal_quantile(0.5 + 0.5 * level)
}

/// Interval for a binomial proportion `k / n`.
pub fn proportion_ci(k: u64, n: u64, level: f64, method: CiMethod) -> Result<ConfidenceInterval> {
    if n == 0 {
        return Err(Error::invalid("proportion interval needs n >= 1"));
    }
    if k > n {
        return Err(Error::invalid(format!("successes {k} exceed trials {n}")));
    }
    check_level(level)?;
    let nf = n as f64;
    let p = k as f64 / nf;
    let z = z_critical(level);
    let (lower, upper) = match method {
        CiMethod::Wald => {
            let half = z * (p * (1.0 - p) / nf).sqrt();
            (p - half, p + half)
        }
        CiMethod::Wilson => {
            let z2 = z * z;
            let center = (p + z2 / (2.0 * nf)) / (1.0 + z2 / nf);
            let half = z / (1.0 + z2 / nf) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
            // Pin the exact endpoints, which rounding can miss by an ulp.
            let lo = if k == 0 { 0.0 } else { center - half };
            let hi = if k == n { 1.0 } else { center + half };
            (lo, hi)
        }
        CiMethod::ClopperPearson => {
            let alpha = 1.0 - level;
            let kf = k as f64;
            let lo = if k == 0 { 0.0 } else { beta_quantile(alpha / 2.0, kf, nf - kf + 1.0) };
            let hi = if k == n { 1.0 } else { beta_quantile(1.0 - alpha / 2.0, kf + 1.0, nf - kf) };
            (lo, hi)
        }
        other => return Err(Error::invalid(format!("{other:?} is not a proportion method"))),
    };
    Ok(ConfidenceInterval {
        estimate: p,
        lower: lower.clamp(0.0, 1.0).min(p),
        upper: upper.clamp(0.0, 1.0).max(p),
        level,
        method,
    })
}

/// Hanley-McNeil standard error of an AUC, using the exponential-score
/// approximations `Q1 = A / (2 - A)` and `Q2 = 2A² / (1 + A)`.
pub fn hanley_mcneil_se(auc: f64, n_pos: usize, n_neg: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&auc) {
        return Err(Error::invalid(format!("AUC {auc} outside [0, 1]")));
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass { n_pos, n_neg });
    }
    let a2 = auc * auc;
    let q1 = auc / (2.0 - auc);
    let q2 = 2.0 * a2 / (1.0 + auc);
    let (np, nn) = (n_pos as f64, n_neg as f64);
    let var = (auc * (1.0 - auc) + (np - 1.0) * (q1 - a2) + (nn - 1.0) * (q2 - a2)) / (np * nn);
    Ok(var.max(0.0).sqrt())
}

/// Normal-approximation AUC interval from the Hanley-McNeil standard error.
pub fn hanley_mcneil_ci(auc: f64, n_pos: usize, n_neg: usize, level: f64) -> Result<ConfidenceInterval> {
    check_level(level)?;
    let se = hanley_mcneil_se(auc, n_pos, n_neg)?;
    let half = z_critical(level) * se;
    Ok(ConfidenceInterval {
        estimate: auc,
        lower: (auc - half).clamp(0.0, 1.0),
        upper: (auc + half).clamp(0.0, 1.0),
        level,
        method: CiMethod::HanleyMcneil,
    })
}

/// DeLong structural components: one placement value per positive (share of
/// negatives it outranks) and per negative (share of positives above it),
/// ties counting one half.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelongComponents {
    pub auc: f64,
    pub positive_placements: Vec<f64>,
    pub negative_placements: Vec<f64>,
}

impl DelongComponents {
    pub fn new(scores: &ScoreSet) -> Result<Self> {
        scores.require_both_classes()?;
        let mut pos = scores.positives();
        let mut neg = scores.negatives();
        let (n_pos, n_neg) = (pos.len() as f64, neg.len() as f64);
        // Placement values depend only on the other class, so each side can be
        // computed against a sorted copy of the other.
        let mut neg_sorted = neg.clone();
        neg_sorted.sort_by(f64::total_cmp);
        let mut pos_sorted = pos.clone();
        pos_sorted.sort_by(f64::total_cmp);
        for p in pos.iter_mut() {
            *p = placement(&neg_sorted, *p);
        }
        // Same summation order as `roc::auc`, so the two agree bit for bit.
        let auc = pos.iter().sum::<f64>() / (n_pos * n_neg);
        for p in pos.iter_mut() {
            *p /= n_neg;
        }
        for q in neg.iter_mut() {
            *q = (n_pos - placement(&pos_sorted, *q)) / n_pos;
        }
        Ok(Self { auc, positive_placements: pos, negative_placements: neg })
    }

    /// `S10 / m + S01 / n`, the DeLong variance of the AUC.
    pub fn variance(&self) -> Result<f64> {
        self.covariance(self)
    }

    /// DeLong covariance between two AUCs computed on the same records.
    pub fn covariance(&self, other: &DelongComponents) -> Result<f64> {
        let m = self.positive_placements.len();
        let n = self.negative_placements.len();
        if m < 2 || n < 2 {
            return Err(Error::invalid("DeLong variance needs at least two positives and two negatives"));
        }
        if other.positive_placements.len() != m || other.negative_placements.len() != n {
            return Err(Error::invalid("DeLong covariance needs components over the same records"));
        }
        let s10 = sample_cov(&self.positive_placements, &other.positive_placements);
        let s01 = sample_cov(&self.negative_placements, &other.negative_placements);
        Ok(s10 / m as f64 + s01 / n as f64)
    }
}

fn sample_cov(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (numeric::mean(a), numeric::mean(b));
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() as f64 - 1.0)
}

/// AUC with its DeLong variance.
pub fn delong_variance(scores: &ScoreSet) -> Result<(f64, f64)> {
    let comp = DelongComponents::new(scores)?;
    let var = comp.variance()?;
    Ok((comp.auc, var))
}

/// Normal-approximation AUC interval with the DeLong variance.
pub fn delong_ci(scores: &ScoreSet, level: f64) -> Result<ConfidenceInterval> {
    check_level(level)?;
    let (auc, var) = delong_variance(scores)?;
    let half = z_critical(level) * var.max(0.0).sqrt();
    Ok(ConfidenceInterval {
        estimate: auc,
        lower: (auc - half).clamp(0.0, 1.0),
        upper: (auc + half).clamp(0.0, 1.0),
        level,
        method: CiMethod::Delong,
    })
}
