use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::rng::stream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Holdout,
    KFold,
    LeaveOneOut,
    /// Train and test on the same data. Optimistic by construction; kept for
    /// comparison only.
    Resubstitution,
    /// User-supplied folds, e.g. one fold per acquisition site.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeMeta {
    pub kind: SchemeKind,
    pub k: Option<usize>,
    pub repeats: usize,
    pub stratified: bool,
    pub grouped: bool,
    pub seed: Option<u64>,
    pub test_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub repeat: usize,
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// An explicit list of train/test index sets, exportable as JSON so an
/// evaluation can be audited and replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub scheme: SchemeMeta,
    pub n_samples: usize,
    pub folds: Vec<Fold>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// One independence unit: a group, or a single row when ungrouped.
struct Unit {
    members: Vec<usize>,
    label: usize,
}

fn units(ds: &Dataset, grouped: bool) -> Vec<Unit> {
    match (grouped, ds.group_indices()) {
        (true, Some(gidx)) => {
            let n_groups = gidx.iter().max().map_or(0, |m| m + 1);
            let mut members = vec![Vec::new(); n_groups];
            for (i, &g) in gidx.iter().enumerate() {
                members[g].push(i);
            }
            members
                .into_iter()
                .map(|m| {
                    // Stratify groups by their majority label (lowest class on ties).
                    let mut counts = vec![0usize; ds.class_count()];
                    for &i in &m {
                        counts[ds.labels()[i]] += 1;
                    }
                    let label = counts.iter().enumerate().fold(0, |b, (c, &n)| if n > counts[b] { c } else { b });
                    Unit { members: m, label }
                })
                .collect()
        }
        _ => (0..ds.n_samples()).map(|i| Unit { members: vec![i], label: ds.labels()[i] }).collect(),
    }
}

fn strata(units: &[Unit], class_count: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); class_count];
    for (u, unit) in units.iter().enumerate() {
        out[unit.label].push(u);
    }
    out
}

fn expand(units: &[Unit], chosen: &[usize]) -> Vec<usize> {
    let mut idx: Vec<usize> = chosen.iter().flat_map(|&u| units[u].members.iter().copied()).collect();
    idx.sort_unstable();
    idx
}

fn mixed_group_warning(ds: &Dataset, units: &[Unit]) -> Option<String> {
    let mixed = units.iter().filter(|u| u.members.iter().any(|&i| ds.labels()[i] != u.label)).count();
    (mixed > 0).then(|| format!("{mixed} group(s) contain more than one class; stratified by majority label"))
}

/// A single randomized train/test split. Grouped datasets are split at group
/// granularity.
pub fn holdout_split(ds: &Dataset, test_fraction: f64, stratified: bool, seed: u64) -> Result<SplitPlan> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let grouped = ds.groups().is_some();
    let units = units(ds, grouped);
    let mut rng = stream(seed, &[0]);
    let mut warnings = Vec::new();
    let mut test_units = Vec::new();
    let mut train_units = Vec::new();
    if stratified {
        for (class, mut members) in strata(&units, ds.class_count()).into_iter().enumerate() {
            if members.len() == 1 {
                warnings.push(format!("class {class} has a single unit; assigned to training"));
                train_units.extend(members);
                continue;
            }
            members.shuffle(&mut rng);
            let n_test = (test_fraction * members.len() as f64).round() as usize;
            test_units.extend_from_slice(&members[..n_test]);
            train_units.extend_from_slice(&members[n_test..]);
        }
        if grouped {
            warnings.extend(mixed_group_warning(ds, &units));
        }
    } else {
        let mut order: Vec<usize> = (0..units.len()).collect();
        order.shuffle(&mut rng);
        let n_test = (test_fraction * units.len() as f64).round() as usize;
        test_units.extend_from_slice(&order[..n_test]);
        train_units.extend_from_slice(&order[n_test..]);
    }
    let (train, test) = (expand(&units, &train_units), expand(&units, &test_units));
    if train.is_empty() || test.is_empty() {
        return Err(Error::InfeasibleSplit(format!(
            "test fraction {test_fraction} leaves an empty {} set",
            if train.is_empty() { "training" } else { "test" }
        )));
    }
    Ok(SplitPlan {
        scheme: SchemeMeta {
            kind: SchemeKind::Holdout,
            k: None,
            repeats: 1,
            stratified,
            grouped,
            seed: Some(seed),
            test_fraction: Some(test_fraction),
        },
        n_samples: ds.n_samples(),
        folds: vec![Fold { repeat: 0, fold: 0, train, test }],
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KFoldOptions {
    pub k: usize,
    pub stratified: bool,
    pub grouped: bool,
    pub repeats: usize,
}

impl Default for KFoldOptions {
    fn default() -> Self {
        Self { k: 5, stratified: true, grouped: false, repeats: 1 }
    }
}

/// (Repeated) k-fold partition. Each repeat is an independent shuffle from
/// its own stream. Stratified dealing gives every fold either
/// `floor(n_c / k)` or `ceil(n_c / k)` units of class `c`.
pub fn kfold_split(ds: &Dataset, opts: KFoldOptions, seed: u64) -> Result<SplitPlan> {
    let KFoldOptions { k, stratified, grouped, repeats } = opts;
    if grouped && ds.groups().is_none() {
        return Err(Error::invalid("grouped splitting requested but the dataset has no groups"));
    }
    if repeats == 0 {
        return Err(Error::invalid("repeats must be at least 1"));
    }
    let units = units(ds, grouped);
    if k < 2 || k > units.len() {
        return Err(Error::InfeasibleSplit(format!(
            "k = {k} needs 2 <= k <= {} available {}",
            units.len(),
            if grouped { "groups" } else { "samples" }
        )));
    }
    let mut warnings = Vec::new();
    if repeats > 10 {
        warnings.push(format!("{repeats} repeats requested; more than ten rarely changes the estimate"));
    }
    if ds.groups().is_some() && !grouped {
        warnings.push("dataset has groups but splitting is not grouped; folds may share groups".into());
    }
    let by_class = strata(&units, ds.class_count());
    if stratified {
        let short: Vec<usize> = (0..by_class.len()).filter(|&c| !by_class[c].is_empty() && by_class[c].len() < k).collect();
        if !short.is_empty() {
            warnings.push(format!("classes {short:?} have fewer than k = {k} units; stratification is best effort"));
        }
        if grouped {
            warnings.extend(mixed_group_warning(ds, &units));
        }
    }

    let mut folds = Vec::with_capacity(k * repeats);
    for r in 0..repeats {
        let mut rng = stream(seed, &[r as u64]);
        let mut assigned = vec![Vec::new(); k];
        if stratified {
            let mut offset = 0;
            // Dealing continues where the previous class stopped, which keeps
            // fold sizes within one unit of each other.
            for members in &by_class {
                let mut members = members.clone();
                members.shuffle(&mut rng);
                for (i, &u) in members.iter().enumerate() {
                    assigned[(offset + i) % k].push(u);
                }
                offset += members.len();
            }
        } else {
            let mut order: Vec<usize> = (0..units.len()).collect();
            order.shuffle(&mut rng);
            for (i, u) in order.into_iter().enumerate() {
                assigned[i % k].push(u);
            }
        }
        for (f, test_units) in assigned.iter().enumerate() {
            let test = expand(&units, test_units);
            let train_units: Vec<usize> = (0..k).filter(|&g| g != f).flat_map(|g| assigned[g].iter().copied()).collect();
            folds.push(Fold { repeat: r, fold: f, train: expand(&units, &train_units), test });
        }
    }
    Ok(SplitPlan {
        scheme: SchemeMeta {
            kind: if k == units.len() { SchemeKind::LeaveOneOut } else { SchemeKind::KFold },
            k: Some(k),
            repeats,
            stratified,
            grouped,
            seed: Some(seed),
            test_fraction: None,
        },
        n_samples: ds.n_samples(),
        folds,
        warnings,
    })
}

/// Leave-one-out: k equal to the number of samples (or groups).
pub fn leave_one_out(ds: &Dataset, grouped: bool) -> Result<SplitPlan> {
    let k = if grouped { ds.n_groups().unwrap_or(0) } else { ds.n_samples() };
    kfold_split(ds, KFoldOptions { k, stratified: false, grouped, repeats: 1 }, 0)
}

impl SplitPlan {
    /// Train on everything, test on everything.
    pub fn resubstitution(n_samples: usize) -> Self {
        let all: Vec<usize> = (0..n_samples).collect();
        SplitPlan {
            scheme: SchemeMeta {
                kind: SchemeKind::Resubstitution,
                k: None,
                repeats: 1,
                stratified: false,
                grouped: false,
                seed: None,
                test_fraction: None,
            },
            n_samples,
            folds: vec![Fold { repeat: 0, fold: 0, train: all.clone(), test: all }],
            warnings: vec!["resubstitution estimates are optimistically biased".into()],
        }
    }

    /// Folds from a per-sample test-fold assignment, e.g. the acquisition
    /// site of each sample (leave-one-site-out).
    pub fn from_assignments(assignment: &[usize]) -> Result<Self> {
        let k = assignment.iter().max().map_or(0, |m| m + 1);
        if k < 2 {
            return Err(Error::InfeasibleSplit("custom assignment needs at least two folds".into()));
        }
        let folds = (0..k)
            .map(|f| {
                let (test, train): (Vec<usize>, Vec<usize>) = (0..assignment.len()).partition(|&i| assignment[i] == f);
                Fold { repeat: 0, fold: f, train, test }
            })
            .filter(|f| !f.test.is_empty())
            .collect();
        Ok(SplitPlan {
            scheme: SchemeMeta {
                kind: SchemeKind::Custom,
                k: Some(k),
                repeats: 1,
                stratified: false,
                grouped: false,
                seed: None,
                test_fraction: None,
            },
            n_samples: assignment.len(),
            folds,
            warnings: Vec::new(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Every invariant the plan breaks against `ds`; empty when valid.
    pub fn violations(&self, ds: &Dataset) -> Vec<String> {
        let mut out = Vec::new();
        let n = ds.n_samples();
        if self.n_samples != n {
            out.push(format!("plan is for {} samples, dataset has {n}", self.n_samples));
            return out;
        }
        let groups = ds.groups();
        for f in &self.folds {
            let tag = format!("repeat {} fold {}", f.repeat, f.fold);
            if let Some(&bad) = f.train.iter().chain(&f.test).find(|&&i| i >= n) {
                out.push(format!("{tag}: index {bad} out of range"));
                continue;
            }
            if f.test.is_empty() || f.train.is_empty() {
                out.push(format!("{tag}: empty train or test set"));
            }
            if self.scheme.kind == SchemeKind::Resubstitution {
                continue;
            }
            let train: HashSet<usize> = f.train.iter().copied().collect();
            if f.test.iter().any(|i| train.contains(i)) {
                out.push(format!("{tag}: train and test overlap"));
            }
            if let Some(g) = groups {
                if self.scheme.grouped || self.scheme.kind == SchemeKind::Holdout {
                    let train_groups: HashSet<&str> = f.train.iter().map(|&i| g[i].as_str()).collect();
                    if let Some(&i) = f.test.iter().find(|&&i| train_groups.contains(g[i].as_str())) {
                        out.push(format!("{tag}: group '{}' in both train and test", g[i]));
                    }
                }
            }
        }
        if matches!(self.scheme.kind, SchemeKind::KFold | SchemeKind::LeaveOneOut) {
            for r in 0..self.scheme.repeats {
                let mut seen = vec![0usize; n];
                for f in self.folds.iter().filter(|f| f.repeat == r) {
                    for &i in &f.test {
                        if i < n {
                            seen[i] += 1;
                        }
                    }
                }
                if seen.iter().any(|&c| c != 1) {
                    out.push(format!("repeat {r}: test sets do not partition the samples"));
                }
            }
        }
        out
    }

    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        match self.violations(ds).into_iter().next() {
            None => Ok(()),
            Some(v) => Err(Error::InfeasibleSplit(v)),
        }
    }

    pub fn n_folds(&self) -> usize {
        self.folds.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dataset(labels: Vec<usize>, groups: Option<Vec<String>>) -> Dataset {
        let c = labels.iter().max().map_or(2, |m| (m + 1).max(2));
        let rows = (0..labels.len()).map(|i| vec![i as f64]).collect();
        let ds = Dataset::new(rows, labels, c).unwrap();
        match groups {
            Some(g) => ds.with_groups(g).unwrap(),
            None => ds,
        }
    }

    fn imbalanced() -> Dataset {
        let mut labels = vec![0; 10];
        labels.extend(vec![1; 90]);
        dataset(labels, None)
    }

    #[test]
    fn holdout_sizes() {
        let ds = dataset((0..100).map(|i| i % 2).collect(), None);
        let plan = holdout_split(&ds, 0.2, false, 1).unwrap();
        let f = &plan.folds[0];
        assert_eq!((f.train.len(), f.test.len()), (80, 20));
        assert!(plan.violations(&ds).is_empty());
    }

    #[test]
    fn stratified_holdout_keeps_ten_ninety() {
        let ds = imbalanced();
        for seed in 0..20 {
            let plan = holdout_split(&ds, 0.2, true, seed).unwrap();
            let test = &plan.folds[0].test;
            let minority = test.iter().filter(|&&i| ds.labels()[i] == 0).count();
            assert_eq!((minority, test.len() - minority), (2, 18));
        }
    }

    #[test]
    fn holdout_keeps_groups_whole() {
        let groups = (0..9).map(|i| format!("s{}", i / 3)).collect();
        let ds = dataset(vec![0, 0, 0, 1, 1, 1, 0, 0, 0], Some(groups));
        for seed in 0..10 {
            let plan = holdout_split(&ds, 0.33, false, seed).unwrap();
            assert_eq!(plan.folds[0].test.len(), 3);
            let g: HashSet<&str> = plan.folds[0].test.iter().map(|&i| ds.groups().unwrap()[i].as_str()).collect();
            assert_eq!(g.len(), 1);
            assert!(plan.violations(&ds).is_empty());
        }
    }

    #[test]
    fn holdout_errors() {
        let ds = dataset(vec![0, 1, 0, 1], None);
        assert!(holdout_split(&ds, 0.01, false, 0).is_err());
        assert!(holdout_split(&ds, 1.0, false, 0).is_err());
        let single = dataset(vec![0, 1, 1, 1, 1, 1], None);
        let plan = holdout_split(&single, 0.4, true, 0).unwrap();
        assert!(plan.folds[0].train.contains(&0));
        assert_eq!(plan.warnings.len(), 1);
    }

    #[test]
    fn kfold_examples() {
        let ds = dataset((0..10).map(|i| i % 2).collect(), None);
        let plan = kfold_split(&ds, KFoldOptions { k: 5, stratified: false, grouped: false, repeats: 1 }, 3).unwrap();
        assert_eq!(plan.folds.len(), 5);
        assert!(plan.folds.iter().all(|f| f.test.len() == 2));
        assert!(plan.violations(&ds).is_empty());

        let loo = kfold_split(&ds, KFoldOptions { k: 10, stratified: false, grouped: false, repeats: 1 }, 3).unwrap();
        assert_eq!(loo.scheme.kind, SchemeKind::LeaveOneOut);
        assert!(loo.folds.iter().all(|f| f.test.len() == 1));
        assert_eq!(leave_one_out(&ds, false).unwrap().folds.len(), 10);

        assert!(kfold_split(&ds, KFoldOptions { k: 11, ..Default::default() }, 0).is_err());
        assert!(kfold_split(&ds, KFoldOptions { k: 1, ..Default::default() }, 0).is_err());
        assert!(kfold_split(&ds, KFoldOptions { grouped: true, ..Default::default() }, 0).is_err());
    }

    #[test]
    fn grouped_kfold_six_groups() {
        let groups: Vec<String> = (0..18).map(|i| format!("g{}", i / 3)).collect();
        let ds = dataset((0..18).map(|i| (i / 3) % 2).collect(), Some(groups.clone()));
        for seed in 0..25 {
            let plan = kfold_split(&ds, KFoldOptions { k: 3, stratified: false, grouped: true, repeats: 1 }, seed).unwrap();
            for f in &plan.folds {
                let test_groups: HashSet<&str> = f.test.iter().map(|&i| groups[i].as_str()).collect();
                let train_groups: HashSet<&str> = f.train.iter().map(|&i| groups[i].as_str()).collect();
                assert_eq!(test_groups.len(), 2);
                assert!(test_groups.is_disjoint(&train_groups));
            }
            assert!(plan.violations(&ds).is_empty());
        }
    }

    #[test]
    fn repeats_reshuffle_and_warn() {
        let ds = dataset((0..30).map(|i| i % 3).collect(), None);
        let plan = kfold_split(&ds, KFoldOptions { k: 3, stratified: true, grouped: false, repeats: 12 }, 5).unwrap();
        assert_eq!(plan.folds.len(), 36);
        assert!(plan.warnings.iter().any(|w| w.contains("12 repeats")));
        assert_ne!(plan.folds[0].test, plan.folds[3].test);
        assert!(plan.violations(&ds).is_empty());
    }

    #[test]
    fn sparse_class_warns() {
        let ds = dataset(vec![0, 0, 0, 0, 0, 0, 1, 1], None);
        let plan = kfold_split(&ds, KFoldOptions { k: 4, ..Default::default() }, 0).unwrap();
        assert!(plan.warnings.iter().any(|w| w.contains("best effort")));
    }

    #[test]
    fn custom_and_json() {
        let ds = dataset(vec![0, 1, 0, 1, 0, 1], None);
        let plan = SplitPlan::from_assignments(&[0, 0, 1, 1, 2, 2]).unwrap();
        assert_eq!(plan.folds.len(), 3);
        assert!(plan.violations(&ds).is_empty());
        let back = SplitPlan::from_json(&plan.to_json().unwrap()).unwrap();
        assert_eq!(plan, back);

        let mut broken = plan.clone();
        broken.folds[0].train.push(0);
        assert!(broken.validate(&ds).is_err());
    }

    fn arb_dataset() -> impl Strategy<Value = (Dataset, bool)> {
        (
            prop::collection::vec(0usize..3, 12..80),
            prop::option::of(2usize..8),
        )
            .prop_map(|(labels, group_size)| {
                let groups = group_size.map(|g| (0..labels.len()).map(|i| format!("g{}", i / g)).collect());
                let grouped = groups.is_some();
                (dataset(labels, groups), grouped)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn kfold_invariants((ds, grouped) in arb_dataset(), k in 2usize..6, stratified: bool, seed: u64) {
            let units = if grouped { ds.n_groups().unwrap() } else { ds.n_samples() };
            prop_assume!(k <= units);
            let plan = kfold_split(&ds, KFoldOptions { k, stratified, grouped, repeats: 2 }, seed).unwrap();
            prop_assert!(plan.violations(&ds).is_empty(), "{:?}", plan.violations(&ds));
            if stratified && !grouped {
                let counts = ds.class_counts();
                for f in &plan.folds {
                    for (c, &n_c) in counts.iter().enumerate() {
                        let in_fold = f.test.iter().filter(|&&i| ds.labels()[i] == c).count();
                        prop_assert!(in_fold == n_c / k || in_fold == n_c.div_ceil(k));
                    }
                }
            }
        }
    }
}
