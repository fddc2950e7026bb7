use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Parser;
use serde_json::{json, Value};

use evalkit::compare::{self, TestResult};
use evalkit::data::{load_dataset, Dataset, Schema};
use evalkit::intervals::{delong_ci, hanley_mcneil_ci, proportion_ci, CiMethod, ConfidenceInterval};
use evalkit::metrics::{binary_metrics, multiclass_metrics, ConfusionMatrix};
use evalkit::resampling::{
    bootstrap_oob, cross_validate, cross_validate_with_peeking, holdout_split, kfold_split, leave_one_out, nested_cv, EvalReport,
    GridPoint, KFoldOptions, MetricSpec, PipelineSpec, SelectKBest, SelectionMetric, SplitPlan, Stage, Standardize, UnsafePeeking,
};
use evalkit::rng::stream;
use evalkit::roc::{auc, roc_curve, threshold_closest_topleft, threshold_max_youden, threshold_min_cost, ScoreSet};
use evalkit::sim::{run_estimator_study, tune_separation, Estimator, SimConfig};

use crate::manifest::{digest, emit_csv, emit_json, RunManifest};
use crate::table::{class_names, encode, positive_index, read_predictions, read_scores, Table};
use crate::{
    BootstrapArgs, Cli, Command, Common, CompareArgs, CvArgs, Fig4Args, GenerateArgs, MetricsArgs, ModelArgs, NestedCvArgs, ReplayArgs,
    RocArgs, Scheme, Selection, Simulation, SplitArgs, TestKind,
};

pub struct Outcome {
    /// False when the report is produced but marked invalid.
    pub valid: bool,
}

const OK: Outcome = Outcome { valid: true };

pub fn run(cli: Cli, args: Vec<String>) -> Result<Outcome> {
    match cli.command {
        Command::Metrics(a) => metrics(a, args),
        Command::Roc(a) => roc(a, args),
        Command::Cv(a) => cv(a, args),
        Command::NestedCv(a) => nested(a, args),
        Command::Bootstrap(a) => bootstrap(a, args),
        Command::Compare(a) => compare(a, args),
        Command::Simulate(Simulation::Fig4(a)) => fig4(a, args),
        Command::Generate(a) => generate(a, args),
        Command::Replay(a) => replay(a),
    }
}

fn set_threads(common: &Common) -> Result<()> {
    if let Some(n) = common.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        // A second call in the same process (replay) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn require_seed(common: &Common, command: &str) -> Result<u64> {
    common.seed.ok_or_else(|| anyhow!("{command} is randomized: pass --seed explicitly"))
}

fn require_input<'a>(common: &'a Common, command: &str) -> Result<&'a Path> {
    common.input.as_deref().ok_or_else(|| anyhow!("{command} needs --input"))
}

fn manifest(name: &str, args: Vec<String>, config: &impl serde::Serialize, seed: Option<u64>) -> Result<RunManifest> {
    Ok(RunManifest::new(name, args, serde_json::to_value(config)?, seed))
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn wilson(k: u64, n: u64, level: f64, what: &str, warnings: &mut Vec<String>) -> Result<Option<ConfidenceInterval>> {
    if n == 0 {
        warnings.push(format!("{what}: denominator is zero, no interval"));
        return Ok(None);
    }
    Ok(Some(proportion_ci(k, n, level, CiMethod::Wilson)?))
}

fn metrics(a: MetricsArgs, args: Vec<String>) -> Result<Outcome> {
    set_threads(&a.common)?;
    let input = require_input(&a.common, "metrics")?;
    let mut m = manifest("metrics", args, &a, None)?;
    m.add_input(input)?;
    let p = read_predictions(input, &a.common.label_col, &a.pred_col)?;
    if p.names.len() < 2 {
        bail!("{}: only one class ('{}') occurs", input.display(), p.names[0]);
    }
    let cm = ConfusionMatrix::from_labels(&encode(&p.truth, &p.names), &encode(&p.predicted, &p.names), p.names.len())?;
    let mut warnings = Vec::new();
    let mut report = json!({
        "classes": p.names,
        "n": cm.total(),
        "confusion": { "rows_are": "truth", "columns_are": "predicted", "counts": cm.rows() },
        "multiclass": multiclass_metrics(&cm),
    });
    let mut intervals = serde_json::Map::new();
    intervals.insert("accuracy".into(), json!(wilson(cm.trace(), cm.total(), a.level, "accuracy", &mut warnings)?));
    if p.names.len() == 2 {
        let pos = positive_index(&p.names, a.common.positive.as_deref())?;
        let bundle = binary_metrics(&cm, pos)?;
        let c = bundle.counts;
        report["positive"] = json!(p.names[pos]);
        report["binary"] = serde_json::to_value(bundle)?;
        intervals.insert("sensitivity".into(), json!(wilson(c.tp, c.tp + c.fn_, a.level, "sensitivity", &mut warnings)?));
        intervals.insert("specificity".into(), json!(wilson(c.tn, c.tn + c.fp, a.level, "specificity", &mut warnings)?));
    } else {
        for (i, name) in p.names.iter().enumerate() {
            let what = format!("recall of {name}");
            intervals.insert(format!("recall_{name}"), json!(wilson(cm.get(i, i), cm.row_sum(i), a.level, &what, &mut warnings)?));
        }
    }
    report["intervals"] = json!({ "method": "wilson", "level": a.level, "values": intervals });
    report["warnings"] = json!(warnings);
    warn_all(&warnings);
    emit_json(a.common.out.as_deref(), report, &m)?;
    Ok(OK)
}

fn score_set(truth: &[String], scores: Vec<f64>, positive: Option<&str>) -> Result<(ScoreSet, String)> {
    let names = class_names(truth);
    if names.len() < 2 {
        bail!("truth holds a single class ('{}'); ROC analysis needs both", names[0]);
    }
    let pos = positive_index(&names, positive)?;
    let flags = truth.iter().map(|t| *t == names[pos]).collect();
    Ok((ScoreSet::new(scores, flags)?, names[pos].clone()))
}

fn roc(a: RocArgs, args: Vec<String>) -> Result<Outcome> {
    set_threads(&a.common)?;
    let input = require_input(&a.common, "roc")?;
    let mut m = manifest("roc", args, &a, None)?;
    m.add_input(input)?;
    let s = read_scores(input, &a.common.label_col, &a.score_col)?;
    let (mut set, positive) = score_set(&s.truth, s.scores, a.common.positive.as_deref())?;
    if a.invert_scores {
        set = set.inverted();
    }
    let mut warnings = Vec::new();
    if class_names(&s.truth).len() > 2 {
        warnings.push(format!("more than two classes: '{positive}' versus the rest"));
    }
    let curve = roc_curve(&set)?;
    let area = auc(&set)?;
    let delong = match delong_ci(&set, a.level) {
        Ok(ci) => Some(ci),
        Err(e) => {
            warnings.push(format!("no DeLong interval: {e}"));
            None
        }
    };
    let hanley = hanley_mcneil_ci(area, set.n_pos(), set.n_neg(), a.level)?;
    let prevalence = a.prevalence.unwrap_or(set.n_pos() as f64 / set.len() as f64);
    let report = json!({
        "positive": positive,
        "n_pos": set.n_pos(),
        "n_neg": set.n_neg(),
        "inverted": a.invert_scores,
        "auc": area,
        "delong_ci": delong,
        "hanley_mcneil_ci": hanley,
        "thresholds": {
            "closest_topleft": threshold_closest_topleft(&curve),
            "max_youden": threshold_max_youden(&curve),
            "min_cost": threshold_min_cost(&curve, a.cost_fp, a.cost_fn, prevalence)?,
            "cost": { "fp": a.cost_fp, "fn": a.cost_fn, "prevalence": prevalence },
        },
        "points_file": a.points,
        "warnings": warnings,
    });
    warn_all(&warnings);
    if let Some(points) = &a.points {
        let mut buf = Vec::new();
        curve.write_csv(&mut buf)?;
        emit_csv(Some(points), &buf, &m)?;
    }
    emit_json(a.common.out.as_deref(), report, &m)?;
    Ok(OK)
}

fn load(common: &Common, model: &ModelArgs, command: &str, m: &mut RunManifest) -> Result<Dataset> {
    let input = require_input(common, command)?;
    m.add_input(input)?;
    let schema = Schema { label_col: common.label_col.clone(), group_col: common.group_col.clone(), feature_cols: model.feature_cols.clone() };
    Ok(load_dataset(input, &schema)?)
}

fn pipeline_spec(model: &ModelArgs) -> PipelineSpec {
    PipelineSpec {
        name: None,
        model: model.model.clone(),
        standardize: model.standardize,
        select_k: model.select_k,
        augment_copies: model.augment_copies,
        priors: model.priors.clone(),
    }
}

fn metric_spec(ds: &Dataset, common: &Common, selection: SelectionMetric) -> Result<MetricSpec> {
    Ok(MetricSpec { positive: positive_index(ds.label_names(), common.positive.as_deref())?, selection })
}

fn split_plan(ds: &Dataset, split: &SplitArgs, grouped: bool, seed: u64, m: &mut RunManifest) -> Result<SplitPlan> {
    if let Some(path) = &split.plan {
        m.add_input(path)?;
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let plan = SplitPlan::from_json(&text)?;
        plan.validate(ds)?;
        return Ok(plan);
    }
    let stratified = !split.no_stratify;
    Ok(match split.scheme {
        Scheme::Kfold => kfold_split(ds, KFoldOptions { k: split.k, stratified, grouped, repeats: split.repeats }, seed)?,
        Scheme::Holdout => holdout_split(ds, split.test_fraction, stratified, seed)?,
        Scheme::Loo => leave_one_out(ds, grouped)?,
        Scheme::Resub => SplitPlan::resubstitution(ds.n_samples()),
    })
}

fn eval_json(report: &EvalReport, ds: &Dataset, spec: &MetricSpec) -> Result<Value> {
    let mut v = serde_json::to_value(report)?;
    v["classes"] = json!(ds.label_names());
    v["positive"] = json!(ds.label_names()[spec.positive]);
    Ok(v)
}

fn cv(a: CvArgs, args: Vec<String>) -> Result<Outcome> {
    set_threads(&a.common)?;
    let seed = require_seed(&a.common, "cv")?;
    let mut m = manifest("cv", args, &a, Some(seed))?;
    let ds = load(&a.common, &a.model, "cv", &mut m)?;
    let spec = metric_spec(&ds, &a.common, SelectionMetric::Accuracy)?;
    let plan = split_plan(&ds, &a.split, a.common.group_col.is_some(), seed, &mut m)?;
    let report = if a.unsafe_peeking {
        let mut pipe_spec = pipeline_spec(&a.model);
        let stage: Box<dyn Stage> = match pipe_spec.select_k.take() {
            Some(k) => Box::new(SelectKBest { k }),
            None if pipe_spec.standardize => {
                pipe_spec.standardize = false;
                Box::new(Standardize)
            }
            None => bail!("--unsafe-peeking needs a preprocessing stage (--select-k or --standardize)"),
        };
        cross_validate_with_peeking(&ds, stage.as_ref(), &pipe_spec.build()?, &plan, &spec, seed, UnsafePeeking)?
    } else {
        cross_validate(&ds, &pipeline_spec(&a.model).build()?, &plan, &spec, seed)?
    };
    warn_all(&report.warnings);
    let valid = !report.invalid;
    emit_json(a.common.out.as_deref(), eval_json(&report, &ds, &spec)?, &m)?;
    Ok(Outcome { valid })
}

fn nested(a: NestedCvArgs, args: Vec<String>) -> Result<Outcome> {
    set_threads(&a.common)?;
    let seed = require_seed(&a.common, "nested-cv")?;
    let mut m = manifest("nested-cv", args, &a, Some(seed))?;
    let ds = load(&a.common, &a.model, "nested-cv", &mut m)?;
    let specs: Vec<PipelineSpec> = match (&a.grid, &a.grid_select_k) {
        (Some(path), None) => {
            m.add_input(path)?;
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("{}: expected a JSON array of pipelines", path.display()))?
        }
        (None, Some(ks)) => ks.iter().map(|&k| PipelineSpec { select_k: Some(k), ..pipeline_spec(&a.model) }).collect(),
        (Some(_), Some(_)) => bail!("pass either --grid or --grid-select-k, not both"),
        (None, None) => bail!("nested-cv needs a grid: --grid FILE or --grid-select-k K1,K2,..."),
    };
    let grid = specs.iter().map(|s| Ok(GridPoint { name: s.label(), pipeline: s.build()? })).collect::<Result<Vec<_>>>()?;
    let selection = match a.selection {
        Selection::Accuracy => SelectionMetric::Accuracy,
        Selection::BalancedAccuracy => SelectionMetric::BalancedAccuracy,
        Selection::Auc => SelectionMetric::Auc,
        Selection::Mcc => SelectionMetric::Mcc,
    };
    let spec = metric_spec(&ds, &a.common, selection)?;
    let outer = split_plan(&ds, &a.split, a.common.group_col.is_some(), seed, &mut m)?;
    let report = nested_cv(&ds, &grid, &outer, a.inner_k, &spec, seed)?;
    warn_all(&report.warnings);
    emit_json(a.common.out.as_deref(), eval_json(&report, &ds, &spec)?, &m)?;
    Ok(OK)
}

fn bootstrap(a: BootstrapArgs, args: Vec<String>) -> Result<Outcome> {
    set_threads(&a.common)?;
    let seed = require_seed(&a.common, "bootstrap")?;
    let mut m = manifest("bootstrap", args, &a, Some(seed))?;
    let ds = load(&a.common, &a.model, "bootstrap", &mut m)?;
    let spec = metric_spec(&ds, &a.common, SelectionMetric::Accuracy)?;
    let pipe = pipeline_spec(&a.model);
    let report = bootstrap_oob(&ds, &pipe.build()?, a.replicates, &spec, seed)?;
    warn_all(&report.warnings);
    let mut v = serde_json::to_value(&report)?;
    v["pipeline"] = json!(pipe.label());
    emit_json(a.common.out.as_deref(), v, &m)?;
    Ok(OK)
}

fn require_pair(a: &CompareArgs) -> Result<(&Path, &Path)> {
    match (&a.a, &a.b) {
        (Some(x), Some(y)) => Ok((x, y)),
        _ => bail!("this test needs both --a and --b"),
    }
}

fn same_truth(x: &[String], y: &[String]) -> Result<()> {
    if x.len() != y.len() {
        bail!("sample mismatch: the files hold {} and {} records", x.len(), y.len());
    }
    if let Some(i) = (0..x.len()).find(|&i| x[i] != y[i]) {
        bail!("sample mismatch: record {} has truth '{}' in one file and '{}' in the other", i + 1, x[i], y[i]);
    }
    Ok(())
}

/// Per-fold differences (A − B) grouped by repeat, plus train and test sizes.
fn fold_differences(a: &CompareArgs, m: &mut RunManifest, warnings: &mut Vec<String>) -> Result<(Vec<Vec<f64>>, usize, usize)> {
    if let Some(path) = &a.diffs {
        m.add_input(path)?;
        let t = Table::read(path)?;
        let d = t.numbers("difference")?;
        let repeats: Vec<f64> = if t.column("repeat").is_ok() { t.numbers("repeat")? } else { vec![0.0; d.len()] };
        let mut grouped: Vec<(i64, Vec<f64>)> = Vec::new();
        for (r, v) in repeats.iter().zip(&d) {
            let r = *r as i64;
            match grouped.iter_mut().find(|(k, _)| *k == r) {
                Some((_, vs)) => vs.push(*v),
                None => grouped.push((r, vec![*v])),
            }
        }
        let (n_train, n_test) = match (a.n_train, a.n_test) {
            (Some(x), Some(y)) => (x, y),
            _ if a.test == TestKind::CorrectedResampledT || a.test == TestKind::CorrectedRepeatedKfoldT => {
                bail!("--diffs needs --n-train and --n-test for the corrected tests")
            }
            _ => (1, 1),
        };
        return Ok((grouped.into_iter().map(|(_, v)| v).collect(), n_train, n_test));
    }
    let (pa, pb) = require_pair(a)?;
    let read = |p: &Path| -> Result<EvalReport> {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        serde_json::from_str(&text).with_context(|| format!("{}: not a cv report", p.display()))
    };
    m.add_input(pa)?;
    m.add_input(pb)?;
    let (ra, rb) = (read(pa)?, read(pb)?);
    if ra.plan != rb.plan {
        bail!("sample mismatch: the reports were produced on different split plans");
    }
    if !ra.failed_folds.is_empty() || !rb.failed_folds.is_empty() {
        bail!("cannot compare reports with failed folds");
    }
    let mut by_repeat: Vec<Vec<f64>> = Vec::new();
    for (fa, fb) in ra.folds.iter().zip(&rb.folds) {
        let (x, y) = (fa.metric(&a.metric), fb.metric(&a.metric));
        let d = match (x.value(), y.value()) {
            (Some(x), Some(y)) => x - y,
            _ => bail!("'{}' is undefined on repeat {} fold {}", a.metric, fa.repeat, fa.fold),
        };
        if by_repeat.len() <= fa.repeat {
            by_repeat.resize(fa.repeat + 1, Vec::new());
        }
        by_repeat[fa.repeat].push(d);
    }
    let first = &ra.plan.folds[0];
    let (n_train, n_test) = (first.train.len(), first.test.len());
    if ra.plan.folds.iter().any(|f| f.train.len() != n_train || f.test.len() != n_test) {
        warnings.push(format!("fold sizes vary; using the first fold's {n_train}/{n_test} in the correction"));
    }
    Ok((by_repeat, n_train, n_test))
}

fn compare(a: CompareArgs, args: Vec<String>) -> Result<Outcome> {
    set_threads(&a.common)?;
    let mut m = manifest("compare", args, &a, None)?;
    let mut warnings = Vec::new();
    let result: TestResult = match a.test {
        TestKind::Mcnemar => {
            let (pa, pb) = require_pair(&a)?;
            m.add_input(pa)?;
            m.add_input(pb)?;
            let x = read_predictions(pa, &a.common.label_col, &a.pred_col)?;
            let y = read_predictions(pb, &a.common.label_col, &a.pred_col)?;
            same_truth(&x.truth, &y.truth)?;
            let names = class_names(x.truth.iter().chain(&x.predicted).chain(&y.predicted));
            compare::mcnemar(&encode(&x.truth, &names), &encode(&x.predicted, &names), &encode(&y.predicted, &names))?
        }
        TestKind::Delong => {
            let (pa, pb) = require_pair(&a)?;
            m.add_input(pa)?;
            m.add_input(pb)?;
            let x = read_scores(pa, &a.common.label_col, &a.score_col)?;
            let y = read_scores(pb, &a.common.label_col, &a.score_col)?;
            same_truth(&x.truth, &y.truth)?;
            let (sa, _) = score_set(&x.truth, x.scores, a.common.positive.as_deref())?;
            let (sb, _) = score_set(&y.truth, y.scores, a.common.positive.as_deref())?;
            compare::delong_test(&sa, &sb)?
        }
        kind => {
            let (by_repeat, n_train, n_test) = fold_differences(&a, &mut m, &mut warnings)?;
            let flat: Vec<f64> = by_repeat.iter().flatten().copied().collect();
            match kind {
                TestKind::CorrectedResampledT => compare::corrected_resampled_t(&flat, n_train, n_test)?,
                TestKind::UncorrectedResampledT => compare::uncorrected_resampled_t(&flat)?,
                TestKind::CorrectedRepeatedKfoldT => compare::corrected_repeated_kfold_t(&by_repeat, n_train, n_test)?,
                TestKind::FiveByTwo => {
                    if by_repeat.len() != 5 || by_repeat.iter().any(|r| r.len() != 2) {
                        bail!("the 5x2 CV test needs 5 repeats of 2 folds (use cv --k 2 --repeats 5)");
                    }
                    let table: Vec<[f64; 2]> = by_repeat.iter().map(|r| [r[0], r[1]]).collect();
                    compare::five_by_two_cv_test(&table)?
                }
                TestKind::Mcnemar | TestKind::Delong => unreachable!(),
            }
        }
    };
    let mut v = serde_json::to_value(&result)?;
    if a.a.is_some() && !matches!(a.test, TestKind::Mcnemar | TestKind::Delong) {
        v["metric"] = json!(a.metric);
    }
    if result.degenerate {
        warnings.push("degenerate: the difference has zero variance; p-value set by convention".into());
    }
    v["warnings"] = json!(warnings);
    warn_all(&warnings);
    emit_json(a.common.out.as_deref(), v, &m)?;
    Ok(OK)
}

fn fig4(a: Fig4Args, args: Vec<String>) -> Result<Outcome> {
    set_threads(&a.common)?;
    let seed = require_seed(&a.common, "simulate fig4")?;
    let base = if a.paper_scale { SimConfig::paper_scale(seed) } else { SimConfig::desk(seed) };
    let config = SimConfig {
        dimensions: a.dims.clone().unwrap_or(base.dimensions.clone()),
        train_sizes: a.sizes.clone().unwrap_or(base.train_sizes.clone()),
        target_error: a.target_error,
        repetitions: a.repetitions.unwrap_or(base.repetitions),
        test_size: a.test_size.unwrap_or(base.test_size),
        estimators: vec![Estimator::Cv { k: a.k }, Estimator::Holdout { fraction: a.holdout_fraction }],
        seed,
    };
    let m = RunManifest::new("simulate fig4", args, json!({ "args": a, "resolved": config }), Some(seed));
    let result = run_estimator_study(&config)?;
    for c in result.cells.iter().filter(|c| c.flagged.is_some()) {
        eprintln!("warning: d={} n={} {}: {}", c.dimension, c.train_size, c.estimator, c.flagged.as_deref().unwrap_or(""));
    }
    let (cv, ho) = (config.estimators[0].label(), config.estimators[1].label());
    for (d, n, ratio) in result.mae_ratios(&cv, &ho) {
        eprintln!("d={d} n={n}: MAE({ho}) / MAE({cv}) = {ratio:.2}");
    }
    let mut buf = Vec::new();
    result.write_csv(&mut buf)?;
    emit_csv(a.common.out.as_deref(), &buf, &m)?;
    Ok(OK)
}

fn generate(a: GenerateArgs, args: Vec<String>) -> Result<Outcome> {
    use rand_distr::{Distribution, StandardNormal};
    let seed = require_seed(&a.common, "generate")?;
    let m = manifest("generate", args, &a, Some(seed))?;
    let problem = tune_separation(a.dimension, a.target_error)?;
    let mut rng = stream(seed, &[]);
    let ds = match a.recordings_per_subject {
        None => problem.sample_counts(&[a.n / 2, a.n - a.n / 2], &mut rng),
        Some(0) => bail!("--recordings-per-subject must be positive"),
        Some(r) => {
            // Subject-level offsets make recordings of one subject more alike
            // than recordings of different subjects.
            let subjects = a.n.div_ceil(r);
            let d = a.dimension;
            let (mut rows, mut labels, mut groups) = (Vec::new(), Vec::new(), Vec::new());
            for s in 0..subjects {
                let y = s % 2;
                let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
                let offset: Vec<f64> = (0..d).map(|_| 0.7 * normal()).collect();
                for _ in 0..r {
                    rows.push((0..d).map(|k| problem.means[y][k] + offset[k] + normal()).collect::<Vec<f64>>());
                    labels.push(y);
                    groups.push(format!("s{s:03}"));
                }
            }
            Dataset::new(rows, labels, 2)?.with_groups(groups)?
        }
    };
    let group_col = a.common.group_col.clone().unwrap_or_else(|| "subject".into());
    let mut buf = Vec::new();
    ds.write_csv(&mut buf, &a.common.label_col, Some(&group_col))?;
    emit_csv(a.common.out.as_deref(), &buf, &m)?;
    Ok(OK)
}

fn strip_manifest(mut v: Value) -> Value {
    if let Value::Object(map) = &mut v {
        map.remove("manifest");
    }
    v
}

/// Replace the values of `--out` and `--points` in recorded arguments.
fn rewrite_args(args: &[String], out: &Path) -> Vec<String> {
    let mut rewritten = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--out" | "--points" => {
                it.next();
            }
            a if a.starts_with("--out=") || a.starts_with("--points=") => {}
            _ => rewritten.push(arg.clone()),
        }
    }
    rewritten.push("--out".into());
    rewritten.push(out.display().to_string());
    rewritten
}

fn replay(a: ReplayArgs) -> Result<Outcome> {
    let text = std::fs::read_to_string(&a.report).with_context(|| format!("reading {}", a.report.display()))?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("{}: not JSON", a.report.display()))?;
    let (manifest, original, is_json): (RunManifest, PathBuf, bool) = match value.get("manifest") {
        Some(mv) => (serde_json::from_value(mv.clone())?, a.report.clone(), true),
        None => {
            let m: RunManifest = serde_json::from_value(value).context("neither a report nor a manifest")?;
            let name = a.report.display().to_string();
            let original = name.strip_suffix(".manifest.json").ok_or_else(|| anyhow!("manifest file names end in .manifest.json"))?;
            (m, PathBuf::from(original), false)
        }
    };
    if manifest.subcommand == "replay" {
        bail!("cannot replay a replay");
    }
    for input in &manifest.inputs {
        let now = digest(&input.path).with_context(|| format!("input {} is gone", input.path.display()))?;
        if now != input.sha256 {
            bail!("input {} changed since the run (sha256 {} != {})", input.path.display(), now, input.sha256);
        }
    }
    let out = a.out.clone().unwrap_or_else(|| {
        let mut p = original.clone().into_os_string();
        p.push(".replay");
        PathBuf::from(p)
    });
    let args = rewrite_args(&manifest.args, &out);
    let cli = Cli::try_parse_from(std::iter::once("evalkit".to_string()).chain(args.iter().cloned()))
        .map_err(|e| anyhow!("recorded arguments no longer parse: {e}"))?;
    let outcome = run(cli, args)?;
    let same = if is_json {
        let fresh: Value = serde_json::from_str(&std::fs::read_to_string(&out)?)?;
        strip_manifest(fresh) == strip_manifest(serde_json::from_str(&text)?)
    } else {
        std::fs::read(&out)? == std::fs::read(&original).with_context(|| format!("reading {}", original.display()))?
    };
    if !same {
        bail!("replay of {} differs from the original ({})", original.display(), out.display());
    }
    eprintln!("reproduced {} -> {}", original.display(), out.display());
    Ok(outcome)
}
