//! Python bindings. Vectors are plain sequences of floats, matrices are
//! row-major lists of rows (`n × p` for designs, one row per observation).

use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sandwich::config::{parse_config, BuildError};
use sandwich::data::{sha256_hex, Dataset};
use sandwich::equations::{
    design_matrix, EffectiveConcentration, InverseOddsWeightedMeans, LinearRegression, LogLogistic,
    LogLogisticKind, LogisticRegression, Mean, RobustLocation, Stack, HUBER_K,
};
use sandwich::report::{fit_spec, Provenance};
use sandwich::{estimate, EstimatingFunction, Error, MEstimationResult, Method, SolverConfig};

create_exception!(sandwich, EstimationError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NoConvergence { .. }
        | Error::SingularJacobian { .. }
        | Error::NonFiniteEvaluation { .. }
        | Error::SingularBread => EstimationError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn solver(method: &str, tol: Option<f64>, max_iter: Option<usize>) -> PyResult<SolverConfig> {
    let method = match method {
        "newton" => Method::Newton,
        "broyden" => Method::Broyden,
        other => return Err(PyValueError::new_err(format!("unknown method '{other}'"))),
    };
    let mut cfg = SolverConfig {
        method,
        ..SolverConfig::default()
    };
    if let Some(t) = tol {
        cfg.tol = t;
    }
    if let Some(m) = max_iter {
        cfg.max_iter = m;
    }
    Ok(cfg)
}

/// Design from rows, optionally prefixed with a column of ones.
fn design(x: &[Vec<f64>], n: usize, intercept: bool) -> PyResult<DMatrix<f64>> {
    if x.len() != n {
        return Err(PyValueError::new_err(format!("design has {} rows, expected {n}", x.len())));
    }
    let p = x.first().map_or(0, Vec::len);
    if let Some(i) = x.iter().position(|r| r.len() != p) {
        return Err(PyValueError::new_err(format!("design row {i} has {} entries, expected {p}", x[i].len())));
    }
    let columns: Vec<Vec<f64>> = (0..p).map(|j| x.iter().map(|r| r[j]).collect()).collect();
    let refs: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
    design_matrix(n, &refs, intercept).map_err(to_py)
}

/// A fitted M-estimator.
#[pyclass(module = "sandwich", frozen)]
pub struct Fit {
    #[pyo3(get)]
    theta: Vec<f64>,
    #[pyo3(get)]
    names: Vec<String>,
    #[pyo3(get)]
    bread: Vec<Vec<f64>>,
    #[pyo3(get)]
    filling: Vec<Vec<f64>>,
    /// `B⁻¹ F B⁻ᵀ`, the variance of `√n (θ̂ − θ)`.
    #[pyo3(get)]
    asymptotic_variance: Vec<Vec<f64>>,
    /// `asymptotic_variance / n`.
    #[pyo3(get)]
    covariance: Vec<Vec<f64>>,
    #[pyo3(get)]
    n_obs: usize,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    residual_norm: f64,
    result: MEstimationResult,
}

impl Fit {
    fn new(result: MEstimationResult, names: Vec<String>) -> Self {
        Fit {
            theta: result.theta_hat.clone(),
            names,
            bread: rows(&result.bread),
            filling: rows(&result.filling),
            asymptotic_variance: rows(&result.asymptotic_variance),
            covariance: rows(&result.covariance),
            n_obs: result.n_obs,
            iterations: result.report.iterations,
            residual_norm: result.report.residual_norm,
            result,
        }
    }
}

#[pymethods]
impl Fit {
    #[getter]
    fn std_errors(&self) -> Vec<f64> {
        self.result.std_errors()
    }

    /// Wald intervals `θ̂ ± z SE` as `(lower, upper)` pairs.
    #[pyo3(signature = (level = 0.95))]
    fn confint(&self, level: f64) -> PyResult<Vec<(f64, f64)>> {
        self.result.confidence_intervals(level).map_err(to_py)
    }

    /// Estimate of the parameter called `name`.
    fn __getitem__(&self, name: &str) -> PyResult<f64> {
        match self.names.iter().position(|n| n == name) {
            Some(j) => Ok(self.theta[j]),
            None => Err(pyo3::exceptions::PyKeyError::new_err(name.to_string())),
        }
    }

    fn __repr__(&self) -> String {
        let body: Vec<String> = self
            .names
            .iter()
            .zip(&self.theta)
            .zip(self.result.std_errors())
            .map(|((n, t), s)| format!("{n}={t:.6} (se {s:.6})"))
            .collect();
        format!("Fit({})", body.join(", "))
    }
}

fn run(ef: &dyn EstimatingFunction, init: &[f64], cfg: &SolverConfig) -> PyResult<Fit> {
    let result = estimate(ef, init, cfg).map_err(to_py)?;
    Ok(Fit::new(result, ef.param_names()))
}

fn default_run(ef: &dyn EstimatingFunction, init: Option<Vec<f64>>, cfg: &SolverConfig) -> PyResult<Fit> {
    let init = init.unwrap_or_else(|| ef.default_init(&[]));
    run(ef, &init, cfg)
}

#[pyfunction]
#[pyo3(signature = (y, *, init = None, method = "newton", tol = None, max_iter = None))]
fn mean(y: Vec<f64>, init: Option<Vec<f64>>, method: &str, tol: Option<f64>, max_iter: Option<usize>) -> PyResult<Fit> {
    let ef = Mean::try_new(y).map_err(to_py)?;
    default_run(&ef, init, &solver(method, tol, max_iter)?)
}

/// Huber location; starts at the median unless `init` is given.
#[pyfunction]
#[pyo3(signature = (y, k = HUBER_K, *, init = None, method = "newton", tol = None, max_iter = None))]
fn robust_location(
    y: Vec<f64>,
    k: f64,
    init: Option<Vec<f64>>,
    method: &str,
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> PyResult<Fit> {
    let ef = RobustLocation::new(y, k).map_err(to_py)?;
    default_run(&ef, init, &solver(method, tol, max_iter)?)
}

/// Least squares, or Huber regression when `k` is given.
#[pyfunction]
#[pyo3(signature = (x, y, *, intercept = true, k = None, init = None, method = "newton", tol = None, max_iter = None))]
#[allow(clippy::too_many_arguments)]
fn linear_regression(
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    intercept: bool,
    k: Option<f64>,
    init: Option<Vec<f64>>,
    method: &str,
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> PyResult<Fit> {
    let x = design(&x, y.len(), intercept)?;
    let ef = match k {
        None => LinearRegression::new(x, y),
        Some(k) => LinearRegression::robust(x, y, k),
    }
    .map_err(to_py)?;
    default_run(&ef, init, &solver(method, tol, max_iter)?)
}

#[pyfunction]
#[pyo3(signature = (x, s, *, intercept = true, init = None, method = "newton", tol = None, max_iter = None))]
#[allow(clippy::too_many_arguments)]
fn logistic_regression(
    x: Vec<Vec<f64>>,
    s: Vec<f64>,
    intercept: bool,
    init: Option<Vec<f64>>,
    method: &str,
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> PyResult<Fit> {
    let x = design(&x, s.len(), intercept)?;
    let ef = LogisticRegression::new(x, s).map_err(to_py)?;
    default_run(&ef, init, &solver(method, tol, max_iter)?)
}

/// Three- or four-parameter log-logistic curve. With `delta`, the effective
/// concentration for that percentage is stacked on as the last parameter.
#[pyfunction]
#[pyo3(signature = (dose, response, *, parameters = 3, delta = None, init = None, method = "newton", tol = None, max_iter = None))]
#[allow(clippy::too_many_arguments)]
fn loglogistic(
    dose: Vec<f64>,
    response: Vec<f64>,
    parameters: usize,
    delta: Option<f64>,
    init: Option<Vec<f64>>,
    method: &str,
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> PyResult<Fit> {
    let cfg = solver(method, tol, max_iter)?;
    let kind = LogLogisticKind::from_n_params(parameters).map_err(to_py)?;
    let n = dose.len();
    let curve = LogLogistic::new(dose, response, kind).map_err(to_py)?;
    let Some(delta) = delta else {
        return default_run(&curve, init, &cfg);
    };
    let ec = EffectiveConcentration::new(delta, n, kind).map_err(to_py)?;
    let gamma = curve.default_init(&[]);
    let init = match init {
        Some(v) => v,
        None => {
            let mut v = gamma.clone();
            v.extend(ec.default_init(&gamma));
            v
        }
    };
    let stack = Stack::new()
        .push(curve)
        .and_then(|s| s.push_dependent(ec, 0..parameters))
        .map_err(to_py)?;
    run(&stack, &init, &cfg)
}

/// Stacks a logistic model for `sample` on `x` with inverse-odds-weighted
/// means of the log of each column of `values` over the `sample = 1` rows.
/// The first parameters are the logistic coefficients.
#[pyfunction]
#[pyo3(signature = (values, sample, x, *, intercept = true, method = "newton", tol = None, max_iter = None))]
#[allow(clippy::too_many_arguments)]
fn weighted_means(
    values: Vec<Vec<f64>>,
    sample: Vec<f64>,
    x: Vec<Vec<f64>>,
    intercept: bool,
    method: &str,
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> PyResult<Fit> {
    let cfg = solver(method, tol, max_iter)?;
    let n = sample.len();
    let design = design(&x, n, intercept)?;
    let m = values.first().map_or(0, Vec::len);
    if values.len() != n || values.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("values must be an n × m table matching sample"));
    }
    let values = DMatrix::from_fn(n, m, |i, j| values[i][j]);
    let logistic = LogisticRegression::new(design.clone(), sample.clone()).map_err(to_py)?;
    let means = InverseOddsWeightedMeans::new(&values, &sample, design).map_err(to_py)?;
    let p = logistic.n_params();
    let mut init = logistic.default_init(&[]);
    init.extend(means.default_init(&init));
    let stack = Stack::new()
        .push(logistic)
        .and_then(|s| s.push_dependent(means, 0..p))
        .map_err(to_py)?;
    run(&stack, &init, &cfg)
}

/// Estimating function backed by a Python callable `psi(theta)` that returns
/// one row of `v` values per observation.
struct PyPsi {
    psi: Py<PyAny>,
    n_params: usize,
    n_obs: usize,
    names: Vec<String>,
}

impl EstimatingFunction for PyPsi {
    fn n_params(&self) -> usize {
        self.n_params
    }

    fn n_obs(&self) -> usize {
        self.n_obs
    }

    fn eval_with(&self, theta: &[f64], _inputs: &[f64]) -> sandwich::Result<DMatrix<f64>> {
        let out: PyResult<Vec<Vec<f64>>> =
            Python::attach(|py| self.psi.call1(py, (theta.to_vec(),))?.extract(py));
        let rows = out.map_err(|e| Error::InvalidArgument(format!("psi raised: {e}")))?;
        if rows.len() != self.n_obs {
            return Err(Error::InvalidArgument(format!(
                "psi returned {} rows, expected {}",
                rows.len(),
                self.n_obs
            )));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != self.n_params) {
            return Err(Error::InvalidArgument(format!(
                "psi row {i} has {} values, expected {}",
                rows[i].len(),
                self.n_params
            )));
        }
        Ok(DMatrix::from_fn(self.n_params, self.n_obs, |j, i| rows[i][j]))
    }

    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }
}

/// Solves `Σᵢ psi(theta)[i] = 0` from `init` and returns the sandwich fit.
#[pyfunction]
#[pyo3(signature = (psi, init, *, names = None, method = "newton", tol = None, max_iter = None))]
fn estimate_custom(
    py: Python<'_>,
    psi: Py<PyAny>,
    init: Vec<f64>,
    names: Option<Vec<String>>,
    method: &str,
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> PyResult<Fit> {
    let cfg = solver(method, tol, max_iter)?;
    let n_obs = psi.call1(py, (init.clone(),))?.bind(py).len()?;
    let names = names.unwrap_or_else(|| (0..init.len()).map(|j| format!("theta{j}")).collect());
    if names.len() != init.len() {
        return Err(PyValueError::new_err("names and init differ in length"));
    }
    let ef = PyPsi {
        psi,
        n_params: init.len(),
        n_obs,
        names,
    };
    run(&ef, &init, &cfg)
}

/// Fits a model config against CSV text and returns the JSON result document.
/// Estimation failures still return the document; its `error` field is set.
#[pyfunction]
fn fit_config(config: &str, data: &str) -> PyResult<String> {
    let spec = parse_config(config).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let dataset = Dataset::from_csv_str(data).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let provenance = Provenance {
        config_sha256: Some(sha256_hex(config.as_bytes())),
        data_sha256: Some(sha256_hex(data.as_bytes())),
        seed: None,
    };
    let outcome = fit_spec(&spec, &dataset, &spec.solver_config(None), provenance).map_err(|e| match e {
        BuildError::Data(e) => PyValueError::new_err(e.to_string()),
        BuildError::Model(e) => to_py(e),
    })?;
    Ok(outcome.document.to_json())
}

#[pyfunction]
#[pyo3(signature = (w, k = HUBER_K))]
fn huber_g(w: f64, k: f64) -> f64 {
    sandwich::equations::huber_g(w, k)
}

#[pyfunction]
fn inverse_odds_weight(x_row: Vec<f64>, beta: Vec<f64>) -> PyResult<f64> {
    if x_row.len() != beta.len() {
        return Err(PyValueError::new_err("x_row and beta differ in length"));
    }
    Ok(sandwich::equations::inverse_odds_weight(&x_row, &beta))
}

#[pymodule]
#[pyo3(name = "sandwich")]
pub fn sandwich_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("HUBER_K", HUBER_K)?;
    m.add("EstimationError", m.py().get_type::<EstimationError>())?;
    m.add_class::<Fit>()?;
    m.add_function(wrap_pyfunction!(mean, m)?)?;
    m.add_function(wrap_pyfunction!(robust_location, m)?)?;
    m.add_function(wrap_pyfunction!(linear_regression, m)?)?;
    m.add_function(wrap_pyfunction!(logistic_regression, m)?)?;
    m.add_function(wrap_pyfunction!(loglogistic, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_means, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_custom, m)?)?;
    m.add_function(wrap_pyfunction!(fit_config, m)?)?;
    m.add_function(wrap_pyfunction!(huber_g, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_odds_weight, m)?)?;
    Ok(())
}
