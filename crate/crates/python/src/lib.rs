//! Python bindings: datasets, adversaries, estimators, lower-bound reports and sweeps.
//!
//! Reports cross the boundary as plain dicts (built from the library's JSON form).

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use robreg::contamination::{contaminate as contaminate_rs, AdversarySpec, Strategy};
use robreg::diagnostics::hc_from_data;
use robreg::estimators::{
    ols, robust_gd, sos_regress, subset_search, RobustGdConfig, RobustMeanMethod, SosConfig, SosMode, SubsetConfig,
};
use robreg::harness::{build_pair, fit_loglog as fit_loglog_rs, run_sweep as run_sweep_rs, ExperimentConfig};
use robreg::lb::pair_report as pair_report_rs;
use robreg::model::{self, CovariateSpec, Marginal, NoiseSpec, RegressionInstance};

create_exception!(robreg_py, RobregError, PyException);

fn err(e: robreg::Error) -> PyErr {
    RobregError::new_err(e.to_string())
}

fn to_py<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| RobregError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

#[pyclass(name = "Dataset", module = "robreg_py", skip_from_py_object)]
#[derive(Clone)]
pub struct PyDataset {
    inner: model::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: model::Dataset::from_rows(&x, &y).map_err(err)?,
        })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: model::read_dataset(&path).map_err(err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        model::write_dataset(&self.inner, &path).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        self.inner.x.row_iter().map(|r| r.iter().cloned().collect()).collect()
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y.iter().cloned().collect()
    }

    #[getter]
    fn theta_star(&self) -> Option<Vec<f64>> {
        self.inner.meta.as_ref().and_then(|m| m.theta_star.clone())
    }

    #[getter]
    fn mask(&self) -> Option<Vec<u8>> {
        self.inner.meta.as_ref().and_then(|m| m.corruption_mask.clone())
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, d={})", self.inner.n(), self.inner.d())
    }
}

/// Samples `n` rows from an i.i.d. instance.
#[pyfunction]
#[pyo3(signature = (d, n, seed=0, covariates="gaussian", noise="uniform", sigma=1.0, theta=None))]
fn sample(
    d: usize,
    n: usize,
    seed: u64,
    covariates: &str,
    noise: &str,
    sigma: f64,
    theta: Option<Vec<f64>>,
) -> PyResult<PyDataset> {
    let m = match covariates {
        "gaussian" => Marginal::gaussian(0.0, 1.0),
        "uniform" => Marginal::uniform(-1.0, 1.0),
        other => return Err(RobregError::new_err(format!("unknown covariates {other:?}"))),
    };
    let noise = match noise {
        "uniform" => NoiseSpec::IndependentUniform { sigma },
        "gaussian" => NoiseSpec::IndependentGaussian { variance: sigma * sigma },
        "zero" => NoiseSpec::Zero,
        other => return Err(RobregError::new_err(format!("unknown noise {other:?}"))),
    };
    let inst = RegressionInstance::new(
        CovariateSpec::iid(m, d).map_err(err)?,
        noise,
        theta.unwrap_or_else(|| vec![1.0; d]),
    )
    .map_err(err)?;
    Ok(PyDataset {
        inner: model::sample_instance(&inst, n, seed).map_err(err)?,
    })
}

/// Samples one side of a lower-bound pair.
#[pyfunction]
#[pyo3(signature = (kind, param, n, side=1, seed=0))]
fn sample_pair(kind: &str, param: f64, n: usize, side: u8, seed: u64) -> PyResult<PyDataset> {
    let p = build_pair(kind, param).map_err(err)?;
    let inst = if side == 1 { p.d1 } else { p.d2 };
    Ok(PyDataset {
        inner: model::sample_instance(&inst, n, seed).map_err(err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (ds, eps, strategy="leverage_plant", magnitude=10.0, slope=-1.0, scale=1.0, seed=0))]
fn contaminate(
    ds: &PyDataset,
    eps: f64,
    strategy: &str,
    magnitude: f64,
    slope: f64,
    scale: f64,
    seed: u64,
) -> PyResult<PyDataset> {
    let strategy = match strategy {
        "leverage_plant" => Strategy::LeveragePlant {
            magnitude,
            slope,
            direction: None,
        },
        "label_flip" => Strategy::LabelFlip { scale },
        other => return Err(RobregError::new_err(format!("unknown strategy {other:?}"))),
    };
    let r = contaminate_rs(&ds.inner, &AdversarySpec { eps, strategy, seed }).map_err(err)?;
    Ok(PyDataset { inner: r.corrupted })
}

/// Runs `ols`, `rgd`, `subset` or `sos`; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (ds, method, eps=0.0, seed=0, mean="trimmed", iters=100, budget=None, ncm_budget=None))]
#[allow(clippy::too_many_arguments)]
fn estimate(
    py: Python<'_>,
    ds: &PyDataset,
    method: &str,
    eps: f64,
    seed: u64,
    mean: &str,
    iters: usize,
    budget: Option<f64>,
    ncm_budget: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let d = &ds.inner;
    let rep = py.detach(|| match method {
        "ols" => ols(d),
        "rgd" => robust_gd(
            d,
            &RobustGdConfig {
                eps,
                iters,
                method: mean.parse::<RobustMeanMethod>()?,
                ..Default::default()
            },
        ),
        "subset" => {
            let base = SubsetConfig::default();
            subset_search(
                d,
                &SubsetConfig {
                    eps,
                    seed,
                    lambda: budget.unwrap_or(base.lambda),
                    ncm_budget: ncm_budget.unwrap_or(base.ncm_budget),
                    ..base
                },
            )
        }
        "sos" | "sos_no_ncm" => sos_regress(
            d,
            &SosConfig {
                eps,
                seed,
                lambda: budget,
                mode: if method == "sos" { SosMode::WithNcm } else { SosMode::NoNcm },
                probes: d.d().max(4),
                ..Default::default()
            },
        ),
        other => Err(robreg::Error::Unregistered(format!("estimator {other:?}"))),
    });
    to_py(py, &rep.map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (kind, eps, mc_samples=100_000, seed=0))]
fn pair_report(py: Python<'_>, kind: &str, eps: f64, mc_samples: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let pair = build_pair(kind, eps).map_err(err)?;
    let rep = py.detach(|| pair_report_rs(&pair, mc_samples, seed)).map_err(err)?;
    to_py(py, &rep)
}

/// Probe bounds on the order-4 hypercontractivity constant of the rows of `x`.
#[pyfunction]
#[pyo3(signature = (x, probes=16, seed=0))]
fn hc_coefficient(py: Python<'_>, x: Vec<Vec<f64>>, probes: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let n = x.len();
    let d = x.first().map_or(0, Vec::len);
    if n == 0 || d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(RobregError::new_err("x must be a non-empty rectangular list of rows"));
    }
    let m = DMatrix::from_fn(n, d, |i, j| x[i][j]);
    to_py(py, &hc_from_data(&m, probes, seed).map_err(err)?)
}

/// `(slope, intercept, r2)` of `log y` against `log x`.
#[pyfunction]
fn fit_loglog(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let (s, c, r2, _) = fit_loglog_rs(&x, &y).map_err(err)?;
    Ok((s, c, r2))
}

/// Runs a sweep from config text; returns the result rows as dicts.
#[pyfunction]
fn run_sweep(py: Python<'_>, config: &str) -> PyResult<Py<PyAny>> {
    let cfg = ExperimentConfig::parse(config).map_err(err)?;
    let table = py.detach(|| run_sweep_rs(&cfg)).map_err(err)?;
    to_py(py, &table.rows)
}

/// `‖Σ^{1/2}(a − b)‖₂`.
#[pyfunction]
fn param_error(a: Vec<f64>, b: Vec<f64>, sigma: Vec<Vec<f64>>) -> PyResult<f64> {
    let d = a.len();
    if b.len() != d || sigma.len() != d || sigma.iter().any(|r| r.len() != d) {
        return Err(RobregError::new_err("dimension mismatch"));
    }
    let s = DMatrix::from_fn(d, d, |i, j| sigma[i][j]);
    robreg::diagnostics::param_error(&DVector::from_vec(a), &DVector::from_vec(b), &s).map_err(err)
}

#[pymodule]
pub fn robreg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RobregError", m.py().get_type::<RobregError>())?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(sample_pair, m)?)?;
    m.add_function(wrap_pyfunction!(contaminate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(pair_report, m)?)?;
    m.add_function(wrap_pyfunction!(hc_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(fit_loglog, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(param_error, m)?)?;
    Ok(())
}
