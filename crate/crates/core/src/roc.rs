//! ROC curves, AUC, threshold selection and fold combination.
//!
//! Orientation is fixed: a higher score means "more positive", and a case is
//! called positive when `score >= threshold`. [`ScoreSet::inverted`] flips
//! scorers that run the other way.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::metrics::Measure;
use crate::numeric;
use crate::{Error, Result};

/// Paired (score, truth) records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    scores: Vec<f64>,
    truth: Vec<bool>,
}

impl ScoreSet {
    pub fn new(scores: Vec<f64>, truth: Vec<bool>) -> Result<Self> {
        if scores.len() != truth.len() {
            return Err(Error::LengthMismatch { left: scores.len(), right: truth.len() });
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::invalid("scores must not be NaN"));
        }
        Ok(Self { scores, truth })
    }

    /// Build from separate positive and negative score lists.
    pub fn from_classes(positives: &[f64], negatives: &[f64]) -> Result<Self> {
        let scores = positives.iter().chain(negatives).copied().collect();
        let truth = std::iter::repeat_n(true, positives.len()).chain(std::iter::repeat_n(false, negatives.len())).collect();
        Self::new(scores, truth)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn truth(&self) -> &[bool] {
        &self.truth
    }

    pub fn n_pos(&self) -> usize {
        self.truth.iter().filter(|&&t| t).count()
    }

    pub fn n_neg(&self) -> usize {
        self.len() - self.n_pos()
    }

    pub fn positives(&self) -> Vec<f64> {
        self.iter().filter(|r| r.1).map(|r| r.0).collect()
    }

    pub fn negatives(&self) -> Vec<f64> {
        self.iter().filter(|r| !r.1).map(|r| r.0).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, bool)> + '_ {
        self.scores.iter().copied().zip(self.truth.iter().copied())
    }

    /// Negated scores: for scorers where low output means positive.
    pub fn inverted(&self) -> Self {
        Self { scores: self.scores.iter().map(|s| -s).collect(), truth: self.truth.clone() }
    }

    /// Same scores with the truth labels swapped.
    pub fn relabeled(&self) -> Self {
        Self { scores: self.scores.clone(), truth: self.truth.iter().map(|t| !t).collect() }
    }

    pub fn concat<'a>(sets: impl IntoIterator<Item = &'a ScoreSet>) -> Self {
        let mut out = ScoreSet { scores: Vec::new(), truth: Vec::new() };
        for s in sets {
            out.scores.extend_from_slice(&s.scores);
            out.truth.extend_from_slice(&s.truth);
        }
        out
    }

    pub(crate) fn require_both_classes(&self) -> Result<(usize, usize)> {
        let (n_pos, n_neg) = (self.n_pos(), self.n_neg());
        if n_pos == 0 || n_neg == 0 {
            return Err(Error::SingleClass { n_pos, n_neg });
        }
        Ok((n_pos, n_neg))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// `+inf` for the all-negative starting point.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Points from (0,0) to (1,1), one per distinct score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

/// Sweep thresholds over the distinct scores in descending order.
pub fn roc_curve(scores: &ScoreSet) -> Result<RocCurve> {
    let (n_pos, n_neg) = scores.require_both_classes()?;
    let mut records: Vec<(f64, bool)> = scores.iter().collect();
    records.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < records.len() {
        let threshold = records[i].0;
        while i < records.len() && records[i].0 == threshold {
            if records[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { threshold, fpr: fp as f64 / n_neg as f64, tpr: tp as f64 / n_pos as f64 });
    }
    Ok(RocCurve { points })
}

impl RocCurve {
    /// Trapezoidal area under the curve.
    pub fn area(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) * 0.5).sum()
    }

    /// Write `threshold,fpr,tpr` rows. The infinite threshold is written as `inf`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["threshold", "fpr", "tpr"])?;
        for p in &self.points {
            w.write_record([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])?;
        }
        w.flush().map_err(|source| Error::Io { path: "<writer>".into(), source })?;
        Ok(())
    }
}

/// Mann-Whitney AUC with ties credited 0.5, in O(n log n).
pub fn auc(scores: &ScoreSet) -> Result<f64> {
    let (n_pos, n_neg) = scores.require_both_classes()?;
    let mut negatives = scores.negatives();
    negatives.sort_by(f64::total_cmp);
    let credit: f64 = scores
        .positives()
        .into_iter()
        .map(|s| placement(&negatives, s))
        .sum();
    Ok(credit / (n_pos as f64 * n_neg as f64))
}

/// Number of entries of the sorted slice below `s`, plus half the ties.
pub(crate) fn placement(sorted: &[f64], s: f64) -> f64 {
    let below = sorted.partition_point(|&x| x < s);
    let not_above = sorted.partition_point(|&x| x <= s);
    below as f64 + 0.5 * (not_above - below) as f64
}

/// A chosen operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
    /// The optimized quantity: distance, J, or expected cost.
    pub objective: f64,
}

const TIE_TOL: f64 = 1e-12;

/// Pick the point minimizing `loss`; ties go to higher tpr, then higher threshold.
fn select(curve: &RocCurve, loss: impl Fn(&RocPoint) -> f64) -> OperatingPoint {
    let mut best: Option<(f64, &RocPoint)> = None;
    for p in &curve.points {
        let l = loss(p);
        let better = match best {
            None => true,
            Some((bl, bp)) => {
                if l < bl - TIE_TOL {
                    true
                } else if l <= bl + TIE_TOL {
                    p.tpr > bp.tpr || (p.tpr == bp.tpr && p.threshold > bp.threshold)
                } else {
                    false
                }
            }
        };
        if better {
            best = Some((l, p));
        }
    }
    let (l, p) = best.expect("curves always have endpoints");
    OperatingPoint { threshold: p.threshold, fpr: p.fpr, tpr: p.tpr, objective: l }
}

/// Point with the smallest Euclidean distance to (0, 1).
pub fn threshold_closest_topleft(curve: &RocCurve) -> OperatingPoint {
    select(curve, |p| (p.fpr * p.fpr + (1.0 - p.tpr) * (1.0 - p.tpr)).sqrt())
}

/// Point maximizing Youden's J = tpr - fpr. `objective` holds J.
pub fn threshold_max_youden(curve: &RocCurve) -> OperatingPoint {
    let mut op = select(curve, |p| -(p.tpr - p.fpr));
    op.objective = op.tpr - op.fpr;
    op
}

/// Point minimizing the expected per-case cost
/// `prevalence (1 - tpr) cost_fn + (1 - prevalence) fpr cost_fp`.
pub fn threshold_min_cost(curve: &RocCurve, cost_fp: f64, cost_fn: f64, prevalence: f64) -> Result<OperatingPoint> {
    if !(prevalence > 0.0 && prevalence < 1.0) {
        return Err(Error::invalid(format!("prevalence {prevalence} outside (0, 1)")));
    }
    if cost_fp < 0.0 || cost_fn < 0.0 || !(cost_fp + cost_fn > 0.0) {
        return Err(Error::invalid("costs must be non-negative with a positive sum"));
    }
    Ok(select(curve, |p| prevalence * (1.0 - p.tpr) * cost_fn + (1.0 - prevalence) * p.fpr * cost_fp))
}

/// Concatenate fold score sets and build one curve.
pub fn pool_rocs(folds: &[ScoreSet]) -> Result<RocCurve> {
    if folds.is_empty() {
        return Err(Error::invalid("no folds to pool"));
    }
    for f in folds {
        f.require_both_classes()?;
    }
    roc_curve(&ScoreSet::concat(folds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucAverage {
    pub mean: Measure,
    /// Sample standard deviation; undefined with fewer than two usable folds.
    pub sd: Measure,
    /// Per-fold AUC, undefined for single-class folds.
    pub per_fold: Vec<Measure>,
    /// Indices of folds left out because they held only one class.
    pub excluded: Vec<usize>,
}

/// Per-fold AUCs, their mean and sample standard deviation.
pub fn average_aucs(folds: &[ScoreSet]) -> AucAverage {
    let per_fold: Vec<Measure> = folds.iter().map(|f| auc(f).ok().into()).collect();
    let excluded = (0..folds.len()).filter(|&i| !per_fold[i].is_defined()).collect();
    let values: Vec<f64> = per_fold.iter().filter_map(|m| m.value()).collect();
    let mean = if values.is_empty() { Measure::UNDEFINED } else { Measure::defined(numeric::mean(&values)) };
    let sd = if values.len() < 2 { Measure::UNDEFINED } else { Measure::defined(numeric::sample_variance(&values).sqrt()) };
    AucAverage { mean, sd, per_fold, excluded }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Brute-force pair enumeration, kept independent of `auc`.
    fn auc_pairs(s: &ScoreSet) -> f64 {
        let (pos, neg) = (s.positives(), s.negatives());
        let mut credit = 0.0;
        for &p in &pos {
            for &n in &neg {
                credit += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
            }
        }
        credit / (pos.len() * neg.len()) as f64
    }

    fn fpr_tpr(c: &RocCurve) -> Vec<(f64, f64)> {
        c.points.iter().map(|p| (p.fpr, p.tpr)).collect()
    }

    fn four() -> ScoreSet {
        ScoreSet::from_classes(&[0.9, 0.4], &[0.5, 0.1]).unwrap()
    }

    #[test]
    fn curve_examples() {
        let c = roc_curve(&ScoreSet::from_classes(&[2.0], &[1.0]).unwrap()).unwrap();
        assert_eq!(fpr_tpr(&c), [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);

        let c = roc_curve(&ScoreSet::from_classes(&[0.3, 0.3], &[0.3]).unwrap()).unwrap();
        assert_eq!(fpr_tpr(&c), [(0.0, 0.0), (1.0, 1.0)]);

        let c = roc_curve(&four()).unwrap();
        assert_eq!(fpr_tpr(&c), [(0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]);
        assert!(c.points[0].threshold.is_infinite());

        assert!(roc_curve(&ScoreSet::from_classes(&[1.0], &[]).unwrap()).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&ScoreSet::from_classes(&[3.0, 4.0], &[1.0, 2.0]).unwrap()).unwrap(), 1.0);
        assert_eq!(auc(&four()).unwrap(), 0.75);
        assert_eq!(auc_pairs(&four()), 0.75);
        assert_eq!(auc(&ScoreSet::from_classes(&[1.0; 3], &[1.0; 4]).unwrap()).unwrap(), 0.5);
        assert!(auc(&ScoreSet::from_classes(&[], &[1.0]).unwrap()).is_err());
    }

    #[test]
    fn threshold_examples() {
        let perfect = roc_curve(&ScoreSet::from_classes(&[2.0, 3.0], &[1.0]).unwrap()).unwrap();
        let tl = threshold_closest_topleft(&perfect);
        assert_eq!((tl.fpr, tl.tpr, tl.objective), (0.0, 1.0, 0.0));
        assert_eq!(threshold_max_youden(&perfect).objective, 1.0);

        let c = roc_curve(&four()).unwrap();
        let tl = threshold_closest_topleft(&c);
        assert_eq!((tl.threshold, tl.fpr, tl.tpr), (0.4, 0.5, 1.0));
        assert_relative_eq!(tl.objective, 0.5);
        let j = threshold_max_youden(&c);
        assert_eq!((j.threshold, j.objective), (0.4, 0.5));

        let tied = roc_curve(&ScoreSet::from_classes(&[1.0; 2], &[1.0; 2]).unwrap()).unwrap();
        assert_eq!(threshold_max_youden(&tied).objective, 0.0);
    }

    #[test]
    fn symmetric_tie_prefers_sensitivity() {
        // (0, 0.5) and (0.5, 1) are both 0.5 from (0, 1).
        let c = RocCurve {
            points: vec![
                RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 },
                RocPoint { threshold: 2.0, fpr: 0.0, tpr: 0.5 },
                RocPoint { threshold: 1.0, fpr: 0.5, tpr: 1.0 },
                RocPoint { threshold: 0.0, fpr: 1.0, tpr: 1.0 },
            ],
        };
        assert_eq!(threshold_closest_topleft(&c).tpr, 1.0);
    }

    #[test]
    fn cost_thresholds() {
        let c = roc_curve(&four()).unwrap();
        let high_fn = threshold_min_cost(&c, 1.0, 100.0, 0.5).unwrap();
        assert_eq!(high_fn.tpr, 1.0);
        let zero_fp = threshold_min_cost(&c, 0.0, 1.0, 0.3).unwrap();
        assert_eq!(zero_fp.tpr, 1.0);
        let high_fp = threshold_min_cost(&c, 100.0, 1.0, 0.5).unwrap();
        assert_eq!(high_fp.fpr, 0.0);
        assert!(threshold_min_cost(&c, 1.0, 1.0, 1.0).is_err());
        assert!(threshold_min_cost(&c, 0.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn pooling_and_averaging() {
        let a = ScoreSet::from_classes(&[0.9], &[0.1]).unwrap();
        let b = ScoreSet::from_classes(&[0.4], &[0.5]).unwrap();
        let pooled = pool_rocs(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(pooled.area(), 0.75);
        assert_eq!(auc(&ScoreSet::concat([&a, &b])).unwrap(), 0.75);

        assert_eq!(pool_rocs(&[four()]).unwrap(), roc_curve(&four()).unwrap());
        assert_eq!(fpr_tpr(&pool_rocs(&[four(), four()]).unwrap()), fpr_tpr(&roc_curve(&four()).unwrap()));
        assert!(pool_rocs(&[]).is_err());

        let avg = average_aucs(&[four(), four()]);
        assert_eq!(avg.sd.unwrap(), 0.0);

        let half = ScoreSet::from_classes(&[1.0], &[1.0]).unwrap();
        let one = ScoreSet::from_classes(&[2.0], &[1.0]).unwrap();
        let avg = average_aucs(&[one.clone(), half]);
        assert_eq!(avg.mean.unwrap(), 0.75);

        let bad = ScoreSet::from_classes(&[1.0], &[]).unwrap();
        let avg = average_aucs(&[one, bad]);
        assert_eq!(avg.excluded, vec![1]);
        assert_eq!(avg.mean.unwrap(), 1.0);
        assert!(!avg.sd.is_defined());
    }

    #[test]
    fn pooling_differs_from_averaging_on_heterogeneous_scales() {
        // Each fold separates perfectly, but on different score scales.
        let a = ScoreSet::from_classes(&[0.9, 0.8], &[0.7, 0.6]).unwrap();
        let b = ScoreSet::from_classes(&[0.4, 0.3], &[0.2, 0.1]).unwrap();
        let avg = average_aucs(&[a.clone(), b.clone()]).mean.unwrap();
        let pooled = pool_rocs(&[a.clone(), b.clone()]).unwrap().area();
        assert_eq!(avg, 1.0);
        assert_eq!(pooled, auc_pairs(&ScoreSet::concat([&a, &b])));
        assert!(pooled < avg);
    }

    #[test]
    fn csv_export() {
        let mut buf = Vec::new();
        roc_curve(&four()).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("threshold,fpr,tpr\ninf,0,0\n0.9,0,0.5\n"));
    }

    fn arb_scores() -> impl Strategy<Value = ScoreSet> {
        (prop::collection::vec((0i32..12, any::<bool>()), 2..60)).prop_filter_map("both classes", |recs| {
            let scores = recs.iter().map(|r| r.0 as f64 / 4.0).collect();
            let truth = recs.iter().map(|r| r.1).collect();
            let s = ScoreSet::new(scores, truth).ok()?;
            (s.n_pos() > 0 && s.n_neg() > 0).then_some(s)
        })
    }

    proptest! {
        #[test]
        fn mann_whitney_equals_trapezoid(s in arb_scores()) {
            let a = auc(&s).unwrap();
            prop_assert!((a - roc_curve(&s).unwrap().area()).abs() < 1e-12);
            prop_assert!((a - auc_pairs(&s)).abs() < 1e-12);
        }

        #[test]
        fn curve_is_monotone(s in arb_scores()) {
            let c = roc_curve(&s).unwrap();
            prop_assert_eq!((c.points[0].fpr, c.points[0].tpr), (0.0, 0.0));
            let last = c.points.last().unwrap();
            prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
            for w in c.points.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
                prop_assert!(w[1].threshold < w[0].threshold);
            }
        }

        #[test]
        fn auc_rank_invariant_and_label_swap(s in arb_scores()) {
            let a = auc(&s).unwrap();
            let transformed = ScoreSet::new(s.scores().iter().map(|x| (3.0 * x).exp() - 7.0).collect(), s.truth().to_vec()).unwrap();
            prop_assert!((auc(&transformed).unwrap() - a).abs() < 1e-12);
            prop_assert!((auc(&s.relabeled()).unwrap() - (1.0 - a)).abs() < 1e-12);
            prop_assert!((auc(&s.inverted()).unwrap() - (1.0 - a)).abs() < 1e-12);
        }

        #[test]
        fn equal_costs_match_youden(s in arb_scores()) {
            let c = roc_curve(&s).unwrap();
            let j = threshold_max_youden(&c);
            let cost = threshold_min_cost(&c, 1.0, 1.0, 0.5).unwrap();
            prop_assert_eq!(j.threshold, cost.threshold);
            prop_assert!((cost.objective - (1.0 - j.objective) / 2.0).abs() < 1e-12);
        }
    }
}
