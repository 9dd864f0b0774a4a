//! Python bindings. Records come back as plain dicts and lists; errors map
//! to `ValueError` (bad input), `RuntimeError` (fit or numeric failure) and
//! `OSError` (file or network).

use std::path::PathBuf;

use madpfi_core::corpus as core_corpus;
use madpfi_core::diversity::{diversity_table, WindowSpec};
use madpfi_core::filter::{build_topk_dataset, eligible_countries, survival_curve, TopK};
use madpfi_core::lmm::{information_criteria, LmmSpec, Method};
use madpfi_core::pipeline::{self, fit_model, full_window, join_frame, windowed_diversity, PipelineConfig};
use madpfi_core::stats::{self, CountryIndicators, DiversityScale};
use madpfi_core::{synthetic, Error, ErrorKind};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde::Serialize;

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.kind() {
        ErrorKind::Validation => PyValueError::new_err(msg),
        ErrorKind::Computation => PyRuntimeError::new_err(msg),
        ErrorKind::Io => PyOSError::new_err(msg),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for madpfi_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_bound_py_any(py)?,
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.into_bound_py_any(py)?,
            (None, Some(f)) => f.into_bound_py_any(py)?,
            _ => py.None().into_bound(py),
        },
        Value::String(s) => s.into_bound_py_any(py)?,
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

fn topk(k: usize) -> PyResult<TopK> {
    TopK::new(k).py()
}

fn windows(spec: &str) -> PyResult<WindowSpec> {
    spec.parse().py()
}

/// Snapshots loaded from a directory or file.
#[pyclass(name = "Corpus", module = "madpfi", frozen)]
struct PyCorpus {
    inner: core_corpus::Corpus,
}

#[pymethods]
impl PyCorpus {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyCorpus {
            inner: core_corpus::load_corpus(path).py()?,
        })
    }

    #[getter]
    fn countries(&self) -> Vec<String> {
        self.inner.countries().map(|c| c.to_string()).collect()
    }

    #[getter]
    fn days(&self) -> Vec<String> {
        self.inner.days().iter().map(|d| d.to_string()).collect()
    }

    #[getter]
    fn snapshot_count(&self) -> usize {
        self.inner.snapshot_count()
    }

    fn __len__(&self) -> usize {
        self.inner.country_count()
    }

    fn __repr__(&self) -> String {
        format!(
            "Corpus(countries={}, days={}, snapshots={})",
            self.inner.country_count(),
            self.inner.days().len(),
            self.inner.snapshot_count()
        )
    }

    /// Countries with at least `k` topics on every observed day.
    fn eligible(&self, k: usize) -> PyResult<Vec<String>> {
        Ok(eligible_countries(&self.inner, topk(k)?)
            .into_iter()
            .map(|c| c.to_string())
            .collect())
    }

    /// `[(k, count)]` in input order.
    fn survival(&self, ks: Vec<usize>) -> PyResult<Vec<(usize, usize)>> {
        let ks: Vec<TopK> = ks.into_iter().map(topk).collect::<PyResult<_>>()?;
        Ok(survival_curve(&self.inner, &ks)
            .into_iter()
            .map(|(k, n)| (k.get(), n))
            .collect())
    }

    /// Diversity records as dicts; `l=None` gives topic-level diversity.
    #[pyo3(signature = (k=90, l=None, window="full"))]
    fn diversity<'py>(
        &self,
        py: Python<'py>,
        k: usize,
        l: Option<usize>,
        window: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let spec = windows(window)?;
        let records = match l {
            None => windowed_diversity(&self.inner, topk(k)?, &spec).py()?,
            Some(l) => {
                let ws = match spec {
                    WindowSpec::Full => vec![full_window(&self.inner).py()?],
                    ref s => {
                        let days: Vec<_> = self.inner.days().iter().copied().collect();
                        s.partition(&days)
                    }
                };
                diversity_table(&build_topk_dataset(&self.inner, topk(k)?), Some(l), &ws).py()?
            }
        };
        to_py(py, &records)
    }

    /// Writes one JSONL file per country under `dir`.
    fn write(&self, dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        core_corpus::write_corpus(&self.inner, dir).py()
    }
}

/// Country indicators read from CSV.
#[pyclass(name = "Indicators", module = "madpfi", frozen)]
struct PyIndicators {
    rows: Vec<CountryIndicators>,
}

#[pymethods]
impl PyIndicators {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyIndicators {
            rows: stats::load_indicators(path).py()?,
        })
    }

    fn __len__(&self) -> usize {
        self.rows.len()
    }

    fn rows<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.rows)
    }
}

#[pyfunction]
fn pearson_r(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<f64> {
    stats::pearson_r(&xs, &ys).py()
}

#[pyfunction]
#[pyo3(signature = (r, n, level=0.95))]
fn fisher_ci(r: f64, n: usize, level: f64) -> PyResult<(f64, f64)> {
    stats::fisher_ci(r, n, level).py()
}

/// `(aic, bic)`.
#[pyfunction]
#[pyo3(name = "information_criteria")]
fn py_information_criteria(loglik: f64, k_params: usize, n: usize) -> (f64, f64) {
    information_criteria(loglik, k_params, n)
}

/// Correlation sweep over `ks`; returns `{"results": [...], "skipped": [...]}`.
#[pyfunction]
#[pyo3(signature = (corpus, indicators, ks, level=0.95, scale="log"))]
fn correlate<'py>(
    py: Python<'py>,
    corpus: &PyCorpus,
    indicators: &PyIndicators,
    ks: Vec<usize>,
    level: f64,
    scale: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let scale: DiversityScale = scale.parse().py()?;
    let window = full_window(&corpus.inner).py()?;
    let mut records = Vec::new();
    for &k in &ks {
        let ds = build_topk_dataset(&corpus.inner, topk(k)?);
        records.extend(diversity_table(&ds, None, &[window]).py()?);
    }
    let sweep = stats::correlation_sweep(&records, &indicators.rows, &ks, level, scale).py()?;
    let out = PyDict::new(py);
    out.set_item("results", to_py(py, &sweep.results)?)?;
    out.set_item("skipped", to_py(py, &sweep.skipped)?)?;
    Ok(out.into_any())
}

/// Fits one model. `model` is 1, 2 or 3 unless `formula` is given.
/// Returns the model record, with `fit` set to None when fitting failed.
#[pyfunction]
#[pyo3(signature = (corpus, indicators, model=1, formula=None, group=None, method="reml", k=90, window="full"))]
#[allow(clippy::too_many_arguments)]
fn fit<'py>(
    py: Python<'py>,
    corpus: &PyCorpus,
    indicators: &PyIndicators,
    model: u8,
    formula: Option<&str>,
    group: Option<&str>,
    method: &str,
    k: usize,
    window: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let config = PipelineConfig {
        windows: windows(window)?,
        grouping: group.map(str::parse).transpose().py()?,
        ..PipelineConfig::default()
    };
    let method: Method = method.parse().py()?;
    let (name, spec) = match formula {
        Some(f) => ("Custom 1".to_string(), LmmSpec::parse_formula(f, config.grouping(), method).py()?),
        None => (format!("Model {model}"), LmmSpec::model(model, config.grouping(), method).py()?),
    };
    let records = windowed_diversity(&corpus.inner, topk(k)?, &config.windows).py()?;
    let (frame, join) = join_frame(&records, &indicators.rows).py()?;
    let result = fit_model(&frame, &name, &spec);
    let out = to_py(py, &result)?;
    out.set_item("join", to_py(py, &join)?)?;
    Ok(out)
}

/// Writes a synthetic fixture under `out`; returns its file paths.
#[pyfunction]
#[pyo3(signature = (out, preset="paper-shape", seed=synthetic::DEFAULT_SEED))]
fn synth(out: PathBuf, preset: &str, seed: u64) -> PyResult<(PathBuf, PathBuf)> {
    let preset: synthetic::Preset = preset.parse().py()?;
    let fixture = synthetic::generate(preset, seed).py()?;
    let files = synthetic::write_fixture(&fixture, out).py()?;
    Ok((files.snapshots, files.indicators))
}

/// Runs the full report. Settings come from the optional TOML `config`,
/// then keyword overrides. Returns the manifest dict; a failed stage is
/// reported there rather than raised.
#[pyfunction]
#[pyo3(signature = (snapshots=None, indicators=None, out=None, config=None, k=None, window=None))]
fn run_report<'py>(
    py: Python<'py>,
    snapshots: Option<PathBuf>,
    indicators: Option<PathBuf>,
    out: Option<PathBuf>,
    config: Option<PathBuf>,
    k: Option<usize>,
    window: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = match &config {
        Some(path) => {
            let file = pipeline::ConfigFile::load(path).py()?;
            PipelineConfig::from_file(&file, path.parent()).py()?
        }
        None => PipelineConfig::default(),
    };
    if let Some(p) = snapshots {
        cfg.snapshots = p;
    }
    if indicators.is_some() {
        cfg.indicators = indicators;
    }
    if let Some(p) = out {
        cfg.out = p;
    }
    if let Some(k) = k {
        cfg.k = topk(k)?;
    }
    if let Some(w) = window {
        cfg.windows = windows(w)?;
    }
    let outcome = py.detach(|| pipeline::run_report(&cfg)).py()?;
    to_py(py, &outcome.manifest)
}

#[pymodule]
fn madpfi(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyIndicators>()?;
    m.add_function(wrap_pyfunction!(pearson_r, m)?)?;
    m.add_function(wrap_pyfunction!(fisher_ci, m)?)?;
    m.add_function(wrap_pyfunction!(py_information_criteria, m)?)?;
    m.add_function(wrap_pyfunction!(correlate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(run_report, m)?)?;
    m.add("DEFAULT_SEED", synthetic::DEFAULT_SEED)?;
    Ok(())
}
