//! Python bindings: corpus synthesis, feature extraction, training,
//! agreement metrics and explanations.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use speechgrade::corpus::{load_corpus, write_corpus, Grade, LexicalResources, Split};
use speechgrade::explain;
use speechgrade::features::{extract_corpus, ExtractConfig};
use speechgrade::harness::{self, ExperimentConfig, SynthSpec};
use speechgrade::learner::{n_grades_of, Family, FittedModel as CoreModel, Model as CoreInner, Task};
use speechgrade::matrix::{FeatureGroup, FeatureMatrix as CoreMatrix};
use speechgrade::metrics;

create_exception!(speechgrade, SpeechgradeError, PyValueError, "Raised for any library error; the message starts with its kind.");

fn err(e: speechgrade::Error) -> PyErr {
    SpeechgradeError::new_err(format!("{}: {e}", e.kind()))
}

trait OrPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> OrPy<T> for speechgrade::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(err)
    }
}

/// Any serializable value as plain Python objects.
fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn groups_of(names: Option<Vec<String>>) -> PyResult<Vec<FeatureGroup>> {
    match names {
        None => Ok(FeatureGroup::ALL.to_vec()),
        Some(v) => v.iter().map(|s| s.parse().py_err()).collect(),
    }
}

fn split_of(name: &str) -> PyResult<Option<Split>> {
    if name == "all" {
        return Ok(None);
    }
    Split::parse(name)
        .map(Some)
        .ok_or_else(|| PyValueError::new_err(format!("unknown split {name:?} (train, valid, test or all)")))
}

fn rows(m: &CoreMatrix, split: &str) -> PyResult<CoreMatrix> {
    Ok(match split_of(split)? {
        None => m.clone(),
        Some(s) => m.split_view(s),
    })
}

/// Feature matrix with group-tagged columns and per-row split and grades.
#[pyclass(module = "speechgrade", frozen, skip_from_py_object)]
pub struct FeatureMatrix {
    inner: CoreMatrix,
}

#[pymethods]
impl FeatureMatrix {
    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Self> {
        Ok(FeatureMatrix { inner: CoreMatrix::read_csv(&path).py_err()? })
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        let inner = CoreMatrix::parse_csv(text).map_err(|m| err(speechgrade::Error::Invalid(m)))?;
        Ok(FeatureMatrix { inner })
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv_string()
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_csv(&path).py_err()
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn n_cols(&self) -> usize {
        self.inner.n_cols()
    }

    #[getter]
    fn columns(&self) -> Vec<String> {
        self.inner.names()
    }

    /// Group tag of each column.
    #[getter]
    fn groups(&self) -> Vec<&'static str> {
        self.inner.columns.iter().map(|c| c.group.tag()).collect()
    }

    #[getter]
    fn row_ids(&self) -> Vec<String> {
        self.inner.row_ids.clone()
    }

    #[getter]
    fn splits(&self) -> Vec<Option<&'static str>> {
        self.inner.splits.iter().map(|s| s.map(Split::name)).collect()
    }

    #[getter]
    fn grades(&self) -> Vec<Option<&'static str>> {
        self.inner.grades.iter().map(|g| g.map(Grade::label)).collect()
    }

    /// Rows as lists of floats, in column order.
    #[getter]
    fn data(&self) -> Vec<Vec<f64>> {
        self.inner.data.clone()
    }

    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        let j = self
            .inner
            .column_index(name)
            .ok_or_else(|| err(speechgrade::Error::UnknownFeature(name.to_string())))?;
        Ok(self.inner.column(j))
    }

    /// Rows of one split, or every row for "all".
    fn split(&self, name: &str) -> PyResult<Self> {
        Ok(FeatureMatrix { inner: rows(&self.inner, name)? })
    }

    fn select_groups(&self, groups: Vec<String>) -> PyResult<Self> {
        Ok(FeatureMatrix { inner: self.inner.select_groups(&groups_of(Some(groups))?) })
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }

    fn __repr__(&self) -> String {
        format!("FeatureMatrix({} rows x {} columns)", self.inner.n_rows(), self.inner.n_cols())
    }
}

/// A fitted model together with its input standardization.
#[pyclass(module = "speechgrade", frozen, skip_from_py_object)]
pub struct Model {
    inner: CoreModel,
}

impl Model {
    fn ensemble(&self) -> PyResult<&speechgrade::learner::TreeEnsemble> {
        match &self.inner.model {
            CoreInner::Trees(t) => Ok(t),
            _ => Err(err(speechgrade::Error::Invalid(format!("needs a tree model, not {}", self.inner.family)))),
        }
    }
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Model { inner: CoreModel::from_json(text).py_err()? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family.name()
    }

    #[getter]
    fn task(&self) -> &'static str {
        self.inner.task.name()
    }

    #[getter]
    fn n_grades(&self) -> usize {
        self.inner.n_grades
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names().to_vec()
    }

    /// Predicted grade ordinals for every row.
    fn predict(&self, matrix: &FeatureMatrix) -> PyResult<Vec<usize>> {
        self.inner.grades(&matrix.inner).py_err()
    }

    /// Continuous scores (expected grade for classifiers).
    fn scores(&self, matrix: &FeatureMatrix) -> PyResult<Vec<f64>> {
        self.inner.scores(&matrix.inner).py_err()
    }

    /// Metric report of the model on one split of `matrix`.
    #[pyo3(signature = (matrix, split = "test"))]
    fn evaluate<'py>(&self, py: Python<'py>, matrix: &FeatureMatrix, split: &str) -> PyResult<Bound<'py, PyAny>> {
        let m = rows(&matrix.inner, split)?;
        let pred = self.inner.grades(&m).py_err()?;
        let gold = m.targets().py_err()?;
        to_py(py, &metrics::MetricReport::from_grades(&gold, &pred, self.inner.n_grades).py_err()?)
    }

    /// (feature, share) pairs, most important first. `method` is "gain" or "split_count".
    #[pyo3(signature = (method = "gain"))]
    fn importance(&self, method: &str) -> PyResult<Vec<(String, f64)>> {
        let e = self.ensemble()?;
        let r = match method {
            "gain" => explain::gain_importance(e),
            "split_count" => explain::split_count_importance(e),
            _ => return Err(PyValueError::new_err(format!("unknown importance method {method:?}"))),
        };
        Ok(r.entries)
    }

    /// Partial dependence of the model score on one feature over `background`.
    #[pyo3(signature = (background, feature, n_grid = explain::DEFAULT_GRID))]
    fn pdp<'py>(&self, py: Python<'py>, background: &FeatureMatrix, feature: &str, n_grid: usize) -> PyResult<Bound<'py, PyAny>> {
        let c = py.detach(|| explain::pdp_model(&self.inner, &background.inner, feature, n_grid)).py_err()?;
        to_py(py, &c)
    }

    /// Exact tree SHAP values for every row. `output` picks one classifier
    /// output; by default trees and forests explain the expected grade and
    /// boosted classifiers the top grade's margin.
    #[pyo3(signature = (matrix, output = None))]
    fn shap<'py>(&self, py: Python<'py>, matrix: &FeatureMatrix, output: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
        let e = py.detach(|| explain::explain_matrix(&self.inner, &matrix.inner, output)).py_err()?;
        to_py(py, &e)
    }

    fn __repr__(&self) -> String {
        format!("Model({}, {}, {} grades)", self.inner.family, self.inner.task, self.inner.n_grades)
    }
}

/// Writes a synthetic graded corpus under `out_dir` and returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, seed, n = 500, grades = 3, prompts = 1, noise = 0.15, acoustic = false, second_rater = None))]
#[allow(clippy::too_many_arguments)]
fn synth_corpus(
    py: Python<'_>,
    out_dir: PathBuf,
    seed: u64,
    n: usize,
    grades: usize,
    prompts: usize,
    noise: f64,
    acoustic: bool,
    second_rater: Option<f64>,
) -> PyResult<PathBuf> {
    let spec = SynthSpec { n, grade_levels: grades, seed, prompts, noise, acoustic, second_rater, ..SynthSpec::default() };
    py.detach(|| {
        let corpus = harness::synth_corpus(&spec)?;
        let manifest = write_corpus(&corpus.responses, &out_dir)?;
        corpus.resources.write_dir(&out_dir.join("resources"))?;
        Ok(manifest)
    })
    .py_err()
}

/// Loads a corpus and extracts one feature matrix per prompt. With `split`
/// the rows get a stratified train/valid/test assignment.
#[pyfunction]
#[pyo3(signature = (corpus, seed, resources = None, groups = None, split = true))]
fn extract(
    py: Python<'_>,
    corpus: PathBuf,
    seed: u64,
    resources: Option<PathBuf>,
    groups: Option<Vec<String>>,
    split: bool,
) -> PyResult<BTreeMap<String, FeatureMatrix>> {
    let config = ExtractConfig { groups: groups_of(groups)?, ..ExtractConfig::default() };
    let extraction = py
        .detach(|| -> speechgrade::Result<_> {
            let res = match &resources {
                Some(dir) => LexicalResources::load_dir(dir)?,
                None => LexicalResources::default(),
            };
            let loaded = load_corpus(&corpus)?;
            if split {
                Ok(harness::prepare(&loaded.responses, &res, &config, seed)?.extraction)
            } else {
                extract_corpus(&loaded.responses, None, &res, &config, seed)
            }
        })
        .py_err()?;
    Ok(extraction.matrices.into_iter().map(|(p, m)| (p, FeatureMatrix { inner: m })).collect())
}

fn experiment(folds: usize) -> ExperimentConfig {
    ExperimentConfig { folds, ..ExperimentConfig::default() }
}

/// Tunes `family` by cross-validation on the training rows (all rows when
/// the matrix has no split) and refits the best setting. Returns the model
/// and the cross-validation table.
#[pyfunction]
#[pyo3(signature = (matrix, seed, family = "gbt", task = "regression", folds = 5, prompt = "p1"))]
fn train<'py>(
    py: Python<'py>,
    matrix: &FeatureMatrix,
    seed: u64,
    family: &str,
    task: &str,
    folds: usize,
    prompt: &str,
) -> PyResult<(Model, Bound<'py, PyAny>)> {
    let family: Family = family.parse().py_err()?;
    let task: Task = task.parse().py_err()?;
    let m = &matrix.inner;
    let (cv, model) = py
        .detach(|| -> speechgrade::Result<_> {
            let n_grades = n_grades_of(m)?;
            let train = if m.splits.iter().all(Option::is_none) { m.clone() } else { m.split_view(Split::Train) };
            harness::tune_and_fit(prompt, &train, family, task, n_grades, &experiment(folds), seed)
        })
        .py_err()?;
    Ok((Model { inner: model }, to_py(py, &cv.table)?))
}

/// Additive ("add") or leave-one-group-out ("drop") ablation rows.
#[pyfunction]
#[pyo3(signature = (matrix, mode, seed, groups = None, family = "gbt", task = "regression", folds = 5, prompt = "p1"))]
#[allow(clippy::too_many_arguments)]
fn ablate<'py>(
    py: Python<'py>,
    matrix: &FeatureMatrix,
    mode: &str,
    seed: u64,
    groups: Option<Vec<String>>,
    family: &str,
    task: &str,
    folds: usize,
    prompt: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let family: Family = family.parse().py_err()?;
    let task: Task = task.parse().py_err()?;
    let groups = groups_of(groups)?;
    let config = experiment(folds);
    let m = &matrix.inner;
    let rows = match mode {
        "add" => py.detach(|| harness::ablation_additive(prompt, m, &groups, family, task, &config, seed)),
        "drop" => py.detach(|| harness::ablation_leave_one_out(prompt, m, &groups, family, task, &config, seed)),
        _ => return Err(PyValueError::new_err(format!("unknown ablation mode {mode:?} (add or drop)"))),
    }
    .py_err()?;
    to_py(py, &rows)
}

/// Quadratic weighted kappa between two lists of grade ordinals.
#[pyfunction]
fn qwk(human: Vec<usize>, predicted: Vec<usize>, n_grades: usize) -> PyResult<f64> {
    metrics::qwk(&human, &predicted, n_grades).py_err()
}

#[pyfunction]
fn pearson(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    metrics::pearson(&a, &b).py_err()
}

#[pyfunction]
fn mse(y_true: Vec<f64>, y_pred: Vec<f64>) -> PyResult<f64> {
    metrics::mse(&y_true, &y_pred).py_err()
}

/// qwk, pearson_r, mse, n, flags and the confusion matrix as a dict.
#[pyfunction]
fn metric_report<'py>(py: Python<'py>, human: Vec<usize>, predicted: Vec<usize>, n_grades: usize) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &metrics::MetricReport::from_grades(&human, &predicted, n_grades).py_err()?)
}

#[pymodule]
#[pyo3(name = "speechgrade")]
pub fn speechgrade_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SpeechgradeError", m.py().get_type::<SpeechgradeError>())?;
    m.add_class::<FeatureMatrix>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(synth_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(ablate, m)?)?;
    m.add_function(wrap_pyfunction!(qwk, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(metric_report, m)?)?;
    Ok(())
}
