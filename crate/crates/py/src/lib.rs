//! Python bindings: the data carrier, the scoring functions, DMD and ESN
//! baselines, synthetic bundles and the referee.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ctf_core::baselines::{self, DmdConfig, DmdModel, EsnConfig, EsnModel, MethodConfig, ReservoirCache};
use ctf_core::bundle::Bundle;
use ctf_core::metrics::{self, ScoreReport};
use ctf_core::referee::{self, BoardView, Ledger, Referee};
use ctf_core::synth::Preset;
use ctf_core::{matrix, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::IoPath { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Dense `(timesteps, sensors)` float matrix.
#[pyclass(name = "TimeSeriesMatrix", module = "ctf", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMatrix(matrix::TimeSeriesMatrix);

#[pymethods]
impl PyMatrix {
    #[new]
    #[pyo3(signature = (rows, dt = None))]
    fn new(rows: Vec<Vec<f64>>, dt: Option<f64>) -> PyResult<Self> {
        let m = matrix::TimeSeriesMatrix::from_rows(&rows).map_err(py_err)?;
        Ok(Self(m.with_dt(dt)))
    }

    #[staticmethod]
    fn zeros(rows: usize, cols: usize) -> Self {
        Self(matrix::TimeSeriesMatrix::zeros(rows, cols))
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        ctf_core::io::read_matrix(path).map(Self).map_err(py_err)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        ctf_core::io::write_matrix(&self.0, path).map_err(py_err)
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    #[getter]
    fn dt(&self) -> Option<f64> {
        self.0.dt()
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        self.0.row_iter().map(<[f64]>::to_vec).collect()
    }

    fn frobenius_norm(&self) -> f64 {
        self.0.frobenius_norm()
    }

    /// Returns `(normalized, mean, std)`.
    fn normalize(&self) -> PyResult<(Self, f64, f64)> {
        let (m, stats) = matrix::normalize(&self.0).map_err(py_err)?;
        Ok((Self(m), stats.mean, stats.std))
    }

    fn add_noise(&self, sigma_rel: f64, seed: u64) -> PyResult<Self> {
        let spec = matrix::NoiseSpec::new(sigma_rel, seed).map_err(py_err)?;
        Ok(Self(matrix::add_noise(&self.0, &spec)))
    }

    fn __repr__(&self) -> String {
        let (r, c) = self.0.shape();
        format!("TimeSeriesMatrix(rows={r}, cols={c})")
    }
}

#[pyfunction]
fn short_term_error(pred: &PyMatrix, truth: &PyMatrix, k: usize) -> PyResult<f64> {
    metrics::short_term_error(&pred.0, &truth.0, k).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (pred, truth, k, kmax = 100))]
fn long_term_error(pred: &PyMatrix, truth: &PyMatrix, k: usize, kmax: usize) -> PyResult<f64> {
    metrics::long_term_error(&pred.0, &truth.0, k, kmax).map_err(py_err)
}

#[pyfunction]
fn to_score(s: f64) -> f64 {
    metrics::to_score(s)
}

/// Log power spectrum rows of the last `k` rows.
#[pyfunction]
#[pyo3(signature = (mat, k, kmax = 100))]
fn power_spectrum(mat: &PyMatrix, k: usize, kmax: usize) -> PyResult<Vec<Vec<f64>>> {
    let p = metrics::power_spectrum(&mat.0, k, kmax).map_err(py_err)?;
    Ok(p.values().chunks(p.cols()).map(<[f64]>::to_vec).collect())
}

/// Exact (delay 0) or time-delay DMD fitted to one trajectory.
#[pyclass(name = "Dmd", module = "ctf", frozen)]
struct PyDmd(DmdModel);

#[pymethods]
impl PyDmd {
    #[new]
    #[pyo3(signature = (train, rank, delay = 0))]
    fn new(train: &PyMatrix, rank: usize, delay: usize) -> PyResult<Self> {
        baselines::dmd_fit(&train.0, &DmdConfig { rank, delay })
            .map(Self)
            .map_err(py_err)
    }

    /// Eigenvalues as `complex` numbers.
    #[getter]
    fn eigenvalues<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyAny>>> {
        let builtins = py.import("builtins")?;
        let complex = builtins.getattr("complex")?;
        self.0
            .eigenvalues()
            .iter()
            .map(|l| complex.call1((l.re, l.im)))
            .collect()
    }

    fn forecast(&self, steps: usize) -> PyMatrix {
        PyMatrix(self.0.forecast(steps))
    }

    fn reconstruct(&self) -> PyMatrix {
        PyMatrix(self.0.reconstruct())
    }
}

/// Parallel echo state network. Keyword arguments use the config field
/// names (`N_h`, `alpha`, `sigma`, `rho`, `beta`, `N_spin`, `g`, `L`, ...).
#[pyclass(name = "Esn", module = "ctf", frozen)]
struct PyEsn(EsnModel);

#[pymethods]
impl PyEsn {
    #[new]
    #[pyo3(signature = (train, **kwargs))]
    fn new(train: &PyMatrix, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let cfg = esn_config(kwargs)?;
        baselines::esn_fit(&train.0, &cfg).map(Self).map_err(py_err)
    }

    fn forecast(&self, steps: usize) -> PyMatrix {
        PyMatrix(self.0.forecast(steps))
    }

    fn reconstruct(&self) -> PyMatrix {
        PyMatrix(self.0.reconstruct())
    }
}

fn esn_config(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<EsnConfig> {
    let mut cfg = EsnConfig::default();
    let Some(kw) = kwargs else { return Ok(cfg) };
    for (k, v) in kw.iter() {
        let key: String = k.extract()?;
        match key.as_str() {
            "N_h" => cfg.reservoir_size = v.extract()?,
            "alpha" => cfg.alpha = v.extract()?,
            "sigma" => cfg.sigma = v.extract()?,
            "sigma_b" => cfg.sigma_b = v.extract()?,
            "rho" => cfg.rho = v.extract()?,
            "density" => cfg.density = v.extract()?,
            "beta" => cfg.beta = v.extract()?,
            "N_spin" => cfg.spinup = v.extract()?,
            "g" => cfg.g = v.extract()?,
            "L" => cfg.locality = v.extract()?,
            "seed" => cfg.seed = v.extract()?,
            other => return Err(PyValueError::new_err(format!("unknown ESN parameter {other:?}"))),
        }
    }
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

/// Writes a synthetic referee bundle and, optionally, a participant copy.
#[pyfunction]
#[pyo3(signature = (preset, out, seed = 0, participant_out = None))]
fn generate_bundle(preset: &str, out: PathBuf, seed: u64, participant_out: Option<PathBuf>) -> PyResult<String> {
    let p: Preset = preset.parse().map_err(py_err)?;
    let bundle = p.bundle(seed).map_err(py_err)?;
    bundle.save(&out).map_err(py_err)?;
    if let Some(dir) = participant_out {
        bundle.save_participant(&dir).map_err(py_err)?;
    }
    Ok(bundle.name().to_string())
}

/// Runs a baseline on every task of a bundle and writes a submission.
/// `method` is a method name or a YAML config. Returns the manifest path.
#[pyfunction]
fn run_baseline(method: &str, bundle: PathBuf, out: PathBuf) -> PyResult<PathBuf> {
    let cfg = if method.contains(':') {
        MethodConfig::from_yaml(method)
    } else {
        MethodConfig::from_name(method)
    }
    .map_err(py_err)?;
    let b = Bundle::load_train_only(&bundle).map_err(py_err)?;
    let preds = baselines::run_all(&cfg, &b.train_view(), &ReservoirCache::default());
    baselines::write_submission(&out, b.name(), cfg.name(), &preds).map_err(py_err)?;
    Ok(out.join(referee::MANIFEST_FILE))
}

fn report_dict<'py>(py: Python<'py>, r: &ScoreReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("dataset", &r.dataset)?;
    d.set_item("method", &r.method)?;
    let scores: BTreeMap<&str, f64> = r.scores.iter().map(|(id, v)| (id.name(), v)).collect();
    d.set_item("scores", scores)?;
    d.set_item("composite", r.composite)?;
    let failures: BTreeMap<&str, &str> = r.failures.iter().map(|(id, s)| (id.name(), s.as_str())).collect();
    d.set_item("failures", failures)?;
    Ok(d)
}

/// Scores a manifest against a referee bundle; with `ledger`, the result
/// is also appended there.
#[pyfunction]
#[pyo3(signature = (bundle, manifest, ledger = None, submitted_at = None))]
fn score<'py>(
    py: Python<'py>,
    bundle: PathBuf,
    manifest: PathBuf,
    ledger: Option<PathBuf>,
    submitted_at: Option<String>,
) -> PyResult<Bound<'py, PyDict>> {
    let sub = referee::ingest(&manifest, submitted_at).map_err(py_err)?;
    let referee = Referee::open(&bundle).map_err(py_err)?;
    let report = match ledger {
        Some(path) => referee.score_and_record(&sub, &Ledger::new(path)).map(|e| e.report),
        None => metrics::evaluate_submission(referee.bundle(), &sub),
    }
    .map_err(py_err)?;
    let d = report_dict(py, &report)?;
    d.set_item("submission_id", sub.id)?;
    Ok(d)
}

/// Leaderboard JSON document for one dataset.
#[pyfunction]
#[pyo3(signature = (ledger, dataset, view = "best"))]
fn leaderboard(ledger: PathBuf, dataset: &str, view: &str) -> PyResult<String> {
    let view: BoardView = view.parse().map_err(py_err)?;
    let entries = Ledger::new(ledger).read().map_err(py_err)?;
    Ok(referee::leaderboard(&entries, dataset, view).to_json())
}

#[pymodule]
fn ctf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMatrix>()?;
    m.add_class::<PyDmd>()?;
    m.add_class::<PyEsn>()?;
    m.add_function(wrap_pyfunction!(short_term_error, m)?)?;
    m.add_function(wrap_pyfunction!(long_term_error, m)?)?;
    m.add_function(wrap_pyfunction!(to_score, m)?)?;
    m.add_function(wrap_pyfunction!(power_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(generate_bundle, m)?)?;
    m.add_function(wrap_pyfunction!(run_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(leaderboard, m)?)?;
    Ok(())
}
