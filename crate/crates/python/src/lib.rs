//! Python bindings. Reports cross the boundary as plain dicts and lists,
//! built from the same serde representation the CLI writes.

use evalkit::compare;
use evalkit::data::{load_dataset, Dataset, PriorVector, Schema};
use evalkit::intervals::{self, CiMethod};
use evalkit::metrics::{self, ConfusionMatrix};
use evalkit::resampling::{self, GridPoint, KFoldOptions, MetricSpec, PipelineSpec, SelectionMetric, SplitPlan};
use evalkit::roc::{self, ScoreSet};
use evalkit::sim::{self, SimConfig};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn err(e: evalkit::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn pipeline_spec(pipeline: Option<&Bound<'_, PyAny>>) -> PyResult<PipelineSpec> {
    match pipeline {
        Some(p) => from_py(p),
        None => Ok(PipelineSpec::model("gnb")),
    }
}

fn score_set(scores: Vec<f64>, truth: Vec<bool>) -> PyResult<ScoreSet> {
    ScoreSet::new(scores, truth).map_err(err)
}

#[pyclass(name = "Dataset", module = "evalkit", frozen)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    /// Rows of features with integer labels `0..class_count`.
    #[new]
    #[pyo3(signature = (rows, labels, groups=None, class_count=None))]
    fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>, groups: Option<Vec<String>>, class_count: Option<usize>) -> PyResult<Self> {
        let c = class_count.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        let mut ds = Dataset::new(rows, labels, c).map_err(err)?;
        if let Some(g) = groups {
            ds = ds.with_groups(g).map_err(err)?;
        }
        Ok(Self { inner: ds })
    }

    #[staticmethod]
    #[pyo3(signature = (path, label_col="label", group_col=None))]
    fn load_csv(path: &str, label_col: &str, group_col: Option<&str>) -> PyResult<Self> {
        let mut schema = Schema::new(label_col);
        if let Some(g) = group_col {
            schema = schema.with_group(g);
        }
        Ok(Self { inner: load_dataset(path, &schema).map_err(err)? })
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    #[getter]
    fn class_count(&self) -> usize {
        self.inner.class_count()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn label_names(&self) -> Vec<String> {
        self.inner.label_names().to_vec()
    }

    #[getter]
    fn groups(&self) -> Option<Vec<String>> {
        self.inner.groups().map(<[String]>::to_vec)
    }

    fn __len__(&self) -> usize {
        self.inner.n_samples()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n_samples={}, n_features={}, classes={})", self.inner.n_samples(), self.inner.n_features(), self.inner.class_count())
    }
}

/// A fixed assignment of rows to train and test sides, reusable across models.
#[pyclass(name = "SplitPlan", module = "evalkit", frozen)]
struct PySplitPlan {
    inner: SplitPlan,
}

#[pymethods]
impl PySplitPlan {
    /// `(repeat, fold, train, test)` for every fold.
    #[getter]
    fn folds(&self) -> Vec<(usize, usize, Vec<usize>, Vec<usize>)> {
        self.inner.folds.iter().map(|f| (f.repeat, f.fold, f.train.clone(), f.test.clone())).collect()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    fn violations(&self, dataset: &PyDataset) -> Vec<String> {
        self.inner.violations(&dataset.inner)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: SplitPlan::from_json(text).map_err(err)? })
    }

    fn __len__(&self) -> usize {
        self.inner.n_folds()
    }

    fn __repr__(&self) -> String {
        format!("SplitPlan({:?}, folds={})", self.inner.scheme.kind, self.inner.n_folds())
    }
}

#[pyfunction]
#[pyo3(signature = (dataset, seed, k=5, repeats=1, stratified=true, grouped=false))]
fn kfold_split(dataset: &PyDataset, seed: u64, k: usize, repeats: usize, stratified: bool, grouped: bool) -> PyResult<PySplitPlan> {
    let opts = KFoldOptions { k, stratified, grouped, repeats };
    Ok(PySplitPlan { inner: resampling::kfold_split(&dataset.inner, opts, seed).map_err(err)? })
}

#[pyfunction]
#[pyo3(signature = (dataset, seed, test_fraction=0.2, stratified=true))]
fn holdout_split(dataset: &PyDataset, seed: u64, test_fraction: f64, stratified: bool) -> PyResult<PySplitPlan> {
    Ok(PySplitPlan { inner: resampling::holdout_split(&dataset.inner, test_fraction, stratified, seed).map_err(err)? })
}

#[pyfunction]
#[pyo3(signature = (dataset, grouped=false))]
fn leave_one_out(dataset: &PyDataset, grouped: bool) -> PyResult<PySplitPlan> {
    Ok(PySplitPlan { inner: resampling::leave_one_out(&dataset.inner, grouped).map_err(err)? })
}

/// Count matrix with true classes as rows.
#[pyfunction]
#[pyo3(signature = (truth, predicted, class_count=None))]
fn confusion_matrix(truth: Vec<usize>, predicted: Vec<usize>, class_count: Option<usize>) -> PyResult<Vec<Vec<u64>>> {
    let c = class_count.unwrap_or_else(|| truth.iter().chain(&predicted).max().map_or(0, |m| m + 1));
    Ok(ConfusionMatrix::from_labels(&truth, &predicted, c).map_err(err)?.rows())
}

#[pyfunction]
#[pyo3(signature = (counts, positive=1))]
fn binary_metrics<'py>(py: Python<'py>, counts: Vec<Vec<u64>>, positive: usize) -> PyResult<Bound<'py, PyAny>> {
    let cm = ConfusionMatrix::from_rows(&counts).map_err(err)?;
    to_py(py, &metrics::binary_metrics(&cm, positive).map_err(err)?)
}

#[pyfunction]
fn multiclass_metrics<'py>(py: Python<'py>, counts: Vec<Vec<u64>>) -> PyResult<Bound<'py, PyAny>> {
    let cm = ConfusionMatrix::from_rows(&counts).map_err(err)?;
    to_py(py, &metrics::multiclass_metrics(&cm))
}

#[pyfunction]
fn bayes_posterior<'py>(py: Python<'py>, priors: Vec<f64>, likelihoods: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let priors = PriorVector::new(priors).map_err(err)?;
    to_py(py, &metrics::bayes_posterior(&priors, &likelihoods).map_err(err)?)
}

/// `method` is one of "wald", "wilson", "clopper_pearson".
#[pyfunction]
#[pyo3(signature = (k, n, level=0.95, method="wilson"))]
fn proportion_ci<'py>(py: Python<'py>, k: u64, n: u64, level: f64, method: &str) -> PyResult<Bound<'py, PyAny>> {
    let method: CiMethod = serde_json::from_value(serde_json::Value::String(method.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown interval method '{method}'")))?;
    to_py(py, &intervals::proportion_ci(k, n, level, method).map_err(err)?)
}

#[pyfunction]
fn auc(scores: Vec<f64>, truth: Vec<bool>) -> PyResult<f64> {
    roc::auc(&score_set(scores, truth)?).map_err(err)
}

#[pyfunction]
fn roc_curve<'py>(py: Python<'py>, scores: Vec<f64>, truth: Vec<bool>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &roc::roc_curve(&score_set(scores, truth)?).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (scores, truth, level=0.95))]
fn delong_ci<'py>(py: Python<'py>, scores: Vec<f64>, truth: Vec<bool>, level: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &intervals::delong_ci(&score_set(scores, truth)?, level).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (auc, n_pos, n_neg, level=0.95))]
fn hanley_mcneil_ci<'py>(py: Python<'py>, auc: f64, n_pos: usize, n_neg: usize, level: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &intervals::hanley_mcneil_ci(auc, n_pos, n_neg, level).map_err(err)?)
}

/// `pipeline` is a dict such as `{"model": "gnb", "standardize": True, "select_k": 10}`.
#[pyfunction]
#[pyo3(signature = (dataset, plan, seed, pipeline=None, positive=1))]
fn cross_validate<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    plan: &PySplitPlan,
    seed: u64,
    pipeline: Option<&Bound<'py, PyAny>>,
    positive: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let p = pipeline_spec(pipeline)?.build().map_err(err)?;
    let spec = MetricSpec { positive, ..MetricSpec::default() };
    let report = py.detach(|| resampling::cross_validate(&dataset.inner, &p, &plan.inner, &spec, seed)).map_err(err)?;
    to_py(py, &report)
}

/// Inner CV on each outer training side picks one entry of `grid` by `selection`.
#[pyfunction]
#[pyo3(signature = (dataset, grid, plan, seed, inner_k=5, selection="accuracy", positive=1))]
#[allow(clippy::too_many_arguments)]
fn nested_cv<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    grid: Vec<Bound<'py, PyAny>>,
    plan: &PySplitPlan,
    seed: u64,
    inner_k: usize,
    selection: &str,
    positive: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let points = grid
        .iter()
        .map(|g| {
            let spec: PipelineSpec = from_py(g)?;
            Ok(GridPoint { name: spec.label(), pipeline: spec.build().map_err(err)? })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let selection: SelectionMetric = serde_json::from_value(serde_json::Value::String(selection.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown selection metric '{selection}'")))?;
    let spec = MetricSpec { positive, selection };
    let report = py.detach(|| resampling::nested_cv(&dataset.inner, &points, &plan.inner, inner_k, &spec, seed)).map_err(err)?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (dataset, seed, replicates=200, pipeline=None, positive=1))]
fn bootstrap_oob<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    seed: u64,
    replicates: usize,
    pipeline: Option<&Bound<'py, PyAny>>,
    positive: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let p = pipeline_spec(pipeline)?.build().map_err(err)?;
    let spec = MetricSpec { positive, ..MetricSpec::default() };
    let report = py.detach(|| resampling::bootstrap_oob(&dataset.inner, &p, replicates, &spec, seed)).map_err(err)?;
    to_py(py, &report)
}

#[pyfunction]
fn estimate_632(resubstitution_error: f64, oob_error: f64) -> f64 {
    resampling::estimate_632(resubstitution_error, oob_error)
}

#[pyfunction]
fn mcnemar<'py>(py: Python<'py>, truth: Vec<usize>, predictions_a: Vec<usize>, predictions_b: Vec<usize>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &compare::mcnemar(&truth, &predictions_a, &predictions_b).map_err(err)?)
}

#[pyfunction]
fn delong_test<'py>(py: Python<'py>, truth: Vec<bool>, scores_a: Vec<f64>, scores_b: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let a = score_set(scores_a, truth.clone())?;
    let b = score_set(scores_b, truth)?;
    to_py(py, &compare::delong_test(&a, &b).map_err(err)?)
}

#[pyfunction]
fn corrected_resampled_t<'py>(py: Python<'py>, differences: Vec<f64>, n_train: usize, n_test: usize) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &compare::corrected_resampled_t(&differences, n_train, n_test).map_err(err)?)
}

#[pyfunction]
fn uncorrected_resampled_t<'py>(py: Python<'py>, differences: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &compare::uncorrected_resampled_t(&differences).map_err(err)?)
}

/// `differences[r][f]` is the metric difference on fold `f` of repeat `r`.
#[pyfunction]
fn corrected_repeated_kfold_t<'py>(py: Python<'py>, differences: Vec<Vec<f64>>, n_train: usize, n_test: usize) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &compare::corrected_repeated_kfold_t(&differences, n_train, n_test).map_err(err)?)
}

#[pyfunction]
fn five_by_two_cv_test<'py>(py: Python<'py>, differences: Vec<[f64; 2]>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &compare::five_by_two_cv_test(&differences).map_err(err)?)
}

/// Holdout versus k-fold CV accuracy estimation on tuned Gaussian problems.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (seed, paper_scale=false, dimensions=None, train_sizes=None, repetitions=None, test_size=None, target_error=0.05))]
fn estimator_study<'py>(
    py: Python<'py>,
    seed: u64,
    paper_scale: bool,
    dimensions: Option<Vec<usize>>,
    train_sizes: Option<Vec<usize>>,
    repetitions: Option<usize>,
    test_size: Option<usize>,
    target_error: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let base = if paper_scale { SimConfig::paper_scale(seed) } else { SimConfig::desk(seed) };
    let config = SimConfig {
        dimensions: dimensions.unwrap_or(base.dimensions),
        train_sizes: train_sizes.unwrap_or(base.train_sizes),
        repetitions: repetitions.unwrap_or(base.repetitions),
        test_size: test_size.unwrap_or(base.test_size),
        target_error,
        ..base
    };
    let result = py.detach(|| sim::run_estimator_study(&config)).map_err(err)?;
    to_py(py, &result)
}

#[pymodule(name = "evalkit")]
fn evalkit_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PySplitPlan>()?;
    m.add_function(wrap_pyfunction!(kfold_split, m)?)?;
    m.add_function(wrap_pyfunction!(holdout_split, m)?)?;
    m.add_function(wrap_pyfunction!(leave_one_out, m)?)?;
    m.add_function(wrap_pyfunction!(confusion_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(binary_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(multiclass_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(bayes_posterior, m)?)?;
    m.add_function(wrap_pyfunction!(proportion_ci, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(roc_curve, m)?)?;
    m.add_function(wrap_pyfunction!(delong_ci, m)?)?;
    m.add_function(wrap_pyfunction!(hanley_mcneil_ci, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    m.add_function(wrap_pyfunction!(nested_cv, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_oob, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_632, m)?)?;
    m.add_function(wrap_pyfunction!(mcnemar, m)?)?;
    m.add_function(wrap_pyfunction!(delong_test, m)?)?;
    m.add_function(wrap_pyfunction!(corrected_resampled_t, m)?)?;
    m.add_function(wrap_pyfunction!(uncorrected_resampled_t, m)?)?;
    m.add_function(wrap_pyfunction!(corrected_repeated_kfold_t, m)?)?;
    m.add_function(wrap_pyfunction!(five_by_two_cv_test, m)?)?;
    m.add_function(wrap_pyfunction!(estimator_study, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
