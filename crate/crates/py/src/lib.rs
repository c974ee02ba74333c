//! Python bindings for the isowatt toolkit: telemetry ingestion, feature
//! extraction, model training, power isolation, and the training pipeline.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use isowatt::extractor::{self, Origin};
use isowatt::isolator::{self, IsolationConfig, Method};
use isowatt::pipeline::{self, RunConfig};
use isowatt::regressors::{self, Approach, HyperParams, ModelId, ModelKind};
use isowatt::synthgen;
use isowatt::telemetry::{self, FileFormat, Producer};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_producer(s: &str) -> PyResult<Producer> {
    Producer::from_str(s).map_err(err)
}

fn parse_approach(s: &str) -> PyResult<Approach> {
    Approach::from_str(s).map_err(err)
}

fn hyper_from(seed: u64, hyper: Option<BTreeMap<String, f64>>) -> HyperParams {
    let mut params = HyperParams::new(seed);
    for (k, v) in hyper.unwrap_or_default() {
        params = params.with(&k, v);
    }
    params
}

/// Aligned per-second telemetry for one node and its containers.
#[pyclass(name = "Frame")]
struct PyFrame {
    inner: telemetry::TelemetryFrame,
}

#[pymethods]
impl PyFrame {
    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn start(&self) -> i64 {
        self.inner.start()
    }

    #[getter]
    fn containers(&self) -> Vec<String> {
        self.inner.containers().iter().cloned().collect()
    }

    #[getter]
    fn background(&self) -> Vec<String> {
        self.inner.background_ids().iter().cloned().collect()
    }

    #[getter]
    fn producers(&self) -> Vec<String> {
        self.inner.container_producers().iter().map(|p| p.to_string()).collect()
    }

    #[getter]
    fn is_rates(&self) -> bool {
        self.inner.unit() == telemetry::SeriesUnit::Rates
    }

    fn mark_background(&self, ids: Vec<String>) -> PyResult<PyFrame> {
        Ok(PyFrame { inner: self.inner.mark_background(&ids).map_err(err)? })
    }

    /// Converts cumulative counters to per-second rates; returns the new
    /// frame and per-series counter reset counts.
    fn to_rates(&self) -> PyResult<(PyFrame, BTreeMap<String, u64>)> {
        let (frame, report) = extractor::to_rates(&self.inner).map_err(err)?;
        Ok((PyFrame { inner: frame }, report.resets))
    }

    /// Feature matrix for a producer group. `origin` is one of
    /// `aggregate_all`, `aggregate_targets`, `background_complement`, or
    /// `per_container` (with `container` set).
    #[pyo3(signature = (producer, origin, container=None))]
    fn extract(&self, producer: &str, origin: &str, container: Option<String>) -> PyResult<PyMatrix> {
        let origin = match (origin, container) {
            ("aggregate_all", _) => Origin::AggregateAll,
            ("aggregate_targets", _) => Origin::AggregateTargets,
            ("background_complement", _) => Origin::BackgroundComplement,
            ("per_container", Some(id)) => Origin::PerContainer(id),
            ("per_container", None) => {
                return Err(PyValueError::new_err("per_container needs a container id"))
            }
            (other, _) => return Err(PyValueError::new_err(format!("unknown origin {other:?}"))),
        };
        let m = extractor::extract(&self.inner, parse_producer(producer)?, &origin).map_err(err)?;
        Ok(PyMatrix { inner: m })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        telemetry::write_csv_file(&self.inner, &path).map_err(err)
    }

    fn summary(&self) -> String {
        self.inner.summary().to_string()
    }
}

/// Usage features for one producer group with optional watt labels.
#[pyclass(name = "Matrix")]
struct PyMatrix {
    inner: extractor::FeatureMatrix,
}

#[pymethods]
impl PyMatrix {
    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    #[getter]
    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows.clone()
    }

    #[getter]
    fn labels(&self) -> Option<Vec<f64>> {
        self.inner.labels.clone()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn with_labels(&self, labels: Vec<f64>) -> PyMatrix {
        PyMatrix { inner: self.inner.clone().with_labels(labels) }
    }

    fn clean(&self) -> PyResult<PyMatrix> {
        Ok(PyMatrix { inner: extractor::clean(&self.inner).map_err(err)? })
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }
}

/// A trained power model.
#[pyclass(name = "Model")]
struct PyModel {
    inner: regressors::PowerModel,
}

#[pymethods]
impl PyModel {
    #[getter]
    fn approach(&self) -> String {
        self.inner.approach.to_string()
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind.to_string()
    }

    #[getter]
    fn producer(&self) -> String {
        self.inner.producer.to_string()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    #[getter]
    fn train_error_mae(&self) -> f64 {
        self.inner.train_error_mae
    }

    fn predict(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.predict(&rows).map_err(err)
    }

    fn predict_matrix(&self, matrix: &PyMatrix) -> PyResult<Vec<f64>> {
        self.inner.predict_matrix(&matrix.inner).map_err(err)
    }

    /// De-standardized (weights, intercept) for degree-1 linear models.
    fn linear_coefficients(&self) -> Option<(Vec<f64>, f64)> {
        self.inner.linear_coefficients()
    }
}

/// Workload power labels plus the isolation diagnostics.
#[pyclass(name = "Isolation")]
struct PyIsolation {
    inner: isolator::IsolationResult,
}

#[pymethods]
impl PyIsolation {
    #[getter]
    fn method(&self) -> String {
        self.inner.method.to_string()
    }

    #[getter]
    fn labels(&self) -> Vec<f64> {
        self.inner.labels.clone()
    }

    #[getter]
    fn labels_raw(&self) -> Vec<f64> {
        self.inner.labels_raw.clone()
    }

    #[getter]
    fn rho(&self) -> Option<f64> {
        self.inner.rho
    }

    #[getter]
    fn best_feature(&self) -> Option<String> {
        self.inner.best_feature.clone()
    }

    #[getter]
    fn chosen_candidate(&self) -> Option<String> {
        self.inner.chosen_candidate.as_ref().map(|id| id.0.clone())
    }

    #[getter]
    fn candidate_mae(&self) -> Option<f64> {
        self.inner.candidate_mae
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(err)
    }
}

/// Outcome of one pipeline run.
#[pyclass(name = "Run")]
struct PyRun {
    inner: pipeline::PipelineRun,
}

#[pymethods]
impl PyRun {
    #[getter]
    fn dataset_tag(&self) -> String {
        self.inner.dataset_tag.clone()
    }

    #[getter]
    fn method(&self) -> String {
        self.inner.method().to_string()
    }

    #[getter]
    fn candidates(&self) -> Vec<String> {
        self.inner.candidates.iter().map(|id| id.0.clone()).collect()
    }

    #[getter]
    fn container_models(&self) -> BTreeMap<String, String> {
        self.inner
            .container_models
            .iter()
            .map(|(a, id)| (a.to_string(), id.0.clone()))
            .collect()
    }

    #[getter]
    fn container_errors(&self) -> BTreeMap<String, f64> {
        self.inner
            .container_errors
            .iter()
            .map(|(a, e)| (a.to_string(), *e))
            .collect()
    }

    #[getter]
    fn isolation(&self) -> PyIsolation {
        PyIsolation { inner: self.inner.isolation.clone() }
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(err)
    }
}

/// On-disk model archive.
#[pyclass(name = "Store")]
struct PyStore {
    inner: regressors::ModelStore,
}

#[pymethods]
impl PyStore {
    #[new]
    fn new(path: PathBuf) -> PyResult<Self> {
        Ok(PyStore { inner: regressors::ModelStore::open(path).map_err(err)? })
    }

    fn save(&self, model: &PyModel) -> PyResult<String> {
        Ok(self.inner.save(&model.inner).map_err(err)?.0)
    }

    fn load(&self, id: &str) -> PyResult<PyModel> {
        Ok(PyModel { inner: self.inner.load(&ModelId(id.to_string())).map_err(err)? })
    }

    fn list(&self) -> PyResult<Vec<String>> {
        Ok(self.inner.list().map_err(err)?.into_iter().map(|(id, _)| id.0).collect())
    }

    fn select_best(&self, producer: &str, kind: &str) -> PyResult<String> {
        let kind = ModelKind::from_str(kind).map_err(err)?;
        Ok(pipeline::select_best(&self.inner, parse_producer(producer)?, kind)
            .map_err(err)?
            .0)
    }
}

/// Reads a telemetry file (csv or jsonl, inferred from the extension when
/// not given) into an aligned frame.
#[pyfunction]
#[pyo3(signature = (path, format=None))]
fn ingest(path: PathBuf, format: Option<String>) -> PyResult<PyFrame> {
    let format = match format {
        Some(f) => FileFormat::from_str(&f).map_err(err)?,
        None => match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") => FileFormat::Jsonl,
            _ => FileFormat::Csv,
        },
    };
    Ok(PyFrame { inner: telemetry::ingest(&path, format).map_err(err)? })
}

/// Trains one model on a labeled matrix.
#[pyfunction]
#[pyo3(signature = (approach, matrix, seed=0, hyper=None))]
fn fit(
    approach: &str,
    matrix: &PyMatrix,
    seed: u64,
    hyper: Option<BTreeMap<String, f64>>,
) -> PyResult<PyModel> {
    let model = regressors::fit(parse_approach(approach)?, &matrix.inner, &hyper_from(seed, hyper))
        .map_err(err)?;
    Ok(PyModel { inner: model })
}

/// Updates a trained model with a new labeled batch.
#[pyfunction]
#[pyo3(signature = (model, matrix, seed=0, hyper=None))]
fn fit_incremental(
    model: &PyModel,
    matrix: &PyMatrix,
    seed: u64,
    hyper: Option<BTreeMap<String, f64>>,
) -> PyResult<PyModel> {
    let updated =
        regressors::fit_incremental(&model.inner, &matrix.inner, &hyper_from(seed, hyper))
            .map_err(err)?;
    Ok(PyModel { inner: updated })
}

/// Maximum signed correlation between any feature and the labels.
#[pyfunction]
fn isolation_goodness(matrix: &PyMatrix, labels: Vec<f64>) -> PyResult<(f64, String)> {
    isolator::isolation_goodness(&matrix.inner, &labels).map_err(err)
}

/// Runs the full training pipeline on a frame and persists models.
#[pyfunction]
#[pyo3(signature = (
    frame, store, producer="cgroups", method="proposed", approaches=vec!["linear".to_string()],
    seed=42, dataset_tag="dataset", rho_threshold=0.7, profile_watts=None
))]
#[allow(clippy::too_many_arguments)]
fn run_pipeline(
    frame: &PyFrame,
    store: &PyStore,
    producer: &str,
    method: &str,
    approaches: Vec<String>,
    seed: u64,
    dataset_tag: &str,
    rho_threshold: f64,
    profile_watts: Option<f64>,
) -> PyResult<PyRun> {
    let cfg = RunConfig {
        producer: parse_producer(producer)?,
        method: Method::from_str(method).map_err(err)?,
        approaches: approaches
            .iter()
            .map(|a| parse_approach(a))
            .collect::<PyResult<Vec<_>>>()?,
        isolation: IsolationConfig {
            rho_threshold,
            profile_background_watts: profile_watts,
            clamp_negative_labels: true,
        },
        seed,
        dataset_tag: dataset_tag.to_string(),
        holdout_fraction: None,
    };
    let run = pipeline::run(&frame.inner, &cfg, &store.inner).map_err(err)?;
    Ok(PyRun { inner: run })
}

/// Emits the 9-dataset synthetic grid; returns the dataset tags.
#[pyfunction]
fn synth_grid(seed: u64, out: PathBuf) -> PyResult<Vec<String>> {
    synthgen::grid(seed, &out).map_err(err)
}

/// Generates the single noisy-surge dataset in memory; returns the frame
/// and a ground-truth dict.
#[pyfunction]
fn generate_noisy(py: Python<'_>, seed: u64) -> PyResult<(PyFrame, Py<PyAny>)> {
    let spec = synthgen::noisy_scenario(seed);
    let (frame, truth) = synthgen::generate(&spec).map_err(err)?;
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("workload_watts", &truth.workload_watts)?;
    dict.set_item("background_watts", &truth.background_watts)?;
    dict.set_item("noise", &truth.noise)?;
    dict.set_item("node_watts", &truth.node_watts)?;
    dict.set_item("workload_usage", &truth.workload_usage)?;
    dict.set_item("p0", truth.p0)?;
    dict.set_item("p_profile", truth.p_profile)?;
    dict.set_item("background_ids", &truth.background_ids)?;
    Ok((PyFrame { inner: frame }, dict.into_any().unbind()))
}

/// Pearson correlation with the constant-input-is-zero convention.
#[pyfunction]
fn pearson(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    isolator::pearson(&a, &b).map_err(err)
}

#[pymodule]
fn isowatt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFrame>()?;
    m.add_class::<PyMatrix>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyIsolation>()?;
    m.add_class::<PyRun>()?;
    m.add_class::<PyStore>()?;
    m.add_function(wrap_pyfunction!(ingest, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_incremental, m)?)?;
    m.add_function(wrap_pyfunction!(isolation_goodness, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(synth_grid, m)?)?;
    m.add_function(wrap_pyfunction!(generate_noisy, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    Ok(())
}
