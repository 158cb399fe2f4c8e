//! Python bindings for the exohydro forecasting library.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;

use ::exohydro as core;
use core::config::RunConfig;
use core::eval::MetricsReport;
use core::windowing::SplitConfig;

fn to_py(e: core::Error) -> PyErr {
    match e {
        core::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        core::Error::Numerical(_) => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Fully resolved run configuration.
#[pyclass(name = "RunConfig", module = "exohydro")]
pub struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    fn new() -> Self {
        Self { inner: RunConfig::default() }
    }

    /// `paper` or `ablation-<variant>`.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        RunConfig::preset(name).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        RunConfig::from_toml(text).map(|inner| Self { inner }).map_err(to_py)
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(to_py)
    }

    #[getter]
    fn context_len(&self) -> usize {
        self.inner.data.window.context_len
    }

    #[getter]
    fn epochs(&self) -> usize {
        self.inner.train.epochs
    }

    #[getter]
    fn learning_rate(&self) -> f64 {
        self.inner.train.learning_rate
    }

    #[getter]
    fn batch_size(&self) -> usize {
        self.inner.train.batch_size
    }

    #[getter]
    fn split_ratio(&self) -> f64 {
        self.inner.data.split.ratio
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.data.mode.to_string()
    }

    /// Number of known-input features for `n_static` static attributes.
    fn feature_count(&self, n_static: usize) -> usize {
        self.inner.data.encoding.feature_count(n_static)
    }

    fn __repr__(&self) -> String {
        format!(
            "RunConfig(preset={:?}, mode={}, context_len={}, epochs={})",
            self.inner.preset, self.inner.data.mode, self.inner.data.window.context_len, self.inner.train.epochs
        )
    }
}

/// RMSE report: one row per model, one column per variable.
#[pyclass(name = "MetricsReport", module = "exohydro")]
pub struct PyMetricsReport {
    inner: MetricsReport,
}

#[pymethods]
impl PyMetricsReport {
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        MetricsReport::from_csv(text).map(|inner| Self { inner }).map_err(to_py)
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn to_table(&self) -> String {
        self.inner.to_table()
    }

    #[getter]
    fn variables(&self) -> Vec<String> {
        self.inner.variables.clone()
    }

    /// `{model: [value or None, ...]}`.
    fn rows(&self) -> BTreeMap<String, Vec<Option<f64>>> {
        self.inner.rows.iter().map(|r| (r.name.clone(), r.values.clone())).collect()
    }

    /// Per row, whether each cell is the column minimum.
    fn lowest_flags(&self) -> Vec<Vec<bool>> {
        self.inner.lowest_flags()
    }

    fn bar_chart_svg(&self, title: &str) -> PyResult<String> {
        core::viz::plot_rmse_bars(&self.inner, title).map_err(to_py)
    }
}

/// Writes `dynamic.csv` and `static.csv` of a synthetic dataset into `out_dir`.
#[pyfunction]
#[pyo3(signature = (out_dir, catchments=8, days=1096, seed=0))]
fn synth_data(out_dir: PathBuf, catchments: usize, days: usize, seed: u64) -> PyResult<(PathBuf, PathBuf)> {
    let recipe = core::eval::SyntheticRecipe::default();
    let (panels, table) = core::eval::generate_synthetic_dataset(catchments, days, seed, &recipe).map_err(to_py)?;
    std::fs::create_dir_all(&out_dir).map_err(|e| PyIOError::new_err(format!("{}: {e}", out_dir.display())))?;
    let (d, s) = (out_dir.join("dynamic.csv"), out_dir.join("static.csv"));
    core::dataset::write_timeseries_csv(&d, &panels).map_err(to_py)?;
    core::dataset::write_static_csv(&s, &table).map_err(to_py)?;
    Ok((d, s))
}

/// Sine and cosine columns per period, one row per timestep.
#[pyfunction]
fn fourier_features(len: usize, periods: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let t = core::encodings::fourier_features(len, &periods).map_err(to_py)?;
    let w = t.last_dim();
    Ok(t.data().chunks(w.max(1)).map(<[f64]>::to_vec).collect())
}

#[pyfunction]
fn legendre(n: usize, x: f64) -> f64 {
    core::encodings::legendre(n, x)
}

/// `(train_ids, val_ids)` for a seeded catchment split.
#[pyfunction]
#[pyo3(signature = (ids, ratio=0.8, seed=0))]
fn spatial_split(ids: Vec<String>, ratio: f64, seed: u64) -> PyResult<(Vec<String>, Vec<String>)> {
    let cfg = SplitConfig { ratio, seed, count_override: None };
    let s = core::windowing::spatial_split(&ids, &cfg).map_err(to_py)?;
    Ok((s.train_ids, s.val_ids))
}

/// RMSE per column of `[rows][columns]` predictions and targets.
#[pyfunction]
fn rmse_per_variable(pred: Vec<Vec<f64>>, target: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let width = pred.first().map_or(0, Vec::len);
    let shape = |m: &Vec<Vec<f64>>| vec![m.len(), 1, width];
    let p = core::tensor::Tensor::new(shape(&pred), pred.concat()).map_err(to_py)?;
    let t = core::tensor::Tensor::new(shape(&target), target.concat()).map_err(to_py)?;
    core::eval::rmse_per_variable(&p, &t).map_err(to_py)
}

/// Maximum relative gradient error on a seeded tiny model.
#[pyfunction]
#[pyo3(signature = (seed, step=1e-5))]
fn grad_check(seed: u64, step: f64) -> PyResult<f64> {
    let (params, batch) = core::nn::random_tiny_problem(seed);
    Ok(core::nn::grad_check(&params, &batch, step).map_err(to_py)?.max_rel_error)
}

/// Runs the command-line interface with `args` (without the program name)
/// and returns its exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    core::cli::run(std::iter::once("exohydro".to_string()).chain(args))
}

#[pymodule]
#[pyo3(name = "exohydro")]
fn exohydro_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyMetricsReport>()?;
    m.add_function(wrap_pyfunction!(synth_data, m)?)?;
    m.add_function(wrap_pyfunction!(fourier_features, m)?)?;
    m.add_function(wrap_pyfunction!(legendre, m)?)?;
    m.add_function(wrap_pyfunction!(spatial_split, m)?)?;
    m.add_function(wrap_pyfunction!(rmse_per_variable, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
