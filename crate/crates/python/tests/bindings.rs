use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};

/// Runs `code` with the extension module bound to `sandwich`.
fn run(code: &str) {
    Python::attach(|py| {
        let m = PyModule::new(py, "sandwich").unwrap();
        sandwich_py::sandwich_module(&m).unwrap();
        let globals = PyDict::new(py);
        globals.set_item("sandwich", m).unwrap();
        let code = CString::new(code).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            panic!("{e}\n{}", e.traceback(py).map(|t| t.format().unwrap()).unwrap_or_default());
        }
    });
}

#[test]
fn mean_matches_closed_form() {
    run(r#"
fit = sandwich.mean([1.0, 2.0, 3.0, 4.0, 5.0])
assert abs(fit.theta[0] - 3.0) < 1e-12
assert abs(fit.covariance[0][0] - 0.4) < 1e-12
assert abs(fit.asymptotic_variance[0][0] - 2.0) < 1e-12
assert abs(fit.bread[0][0] - 1.0) < 1e-9
lo, hi = fit.confint(0.95)[0]
assert abs((hi - lo) / 2 - 1.959963984540054 * 0.4 ** 0.5) < 1e-9
assert fit[fit.names[0]] == fit.theta[0]
"#);
}

#[test]
fn regression_names_and_errors() {
    run(r#"
x = [[0.0], [1.0], [2.0], [3.0], [4.0]]
y = [1.1, 2.9, 5.2, 7.1, 8.8]
fit = sandwich.linear_regression(x, y)
assert len(fit.theta) == 2 and len(fit.std_errors) == 2
robust = sandwich.linear_regression(x, y, k=1.345)
assert abs(robust.theta[1] - fit.theta[1]) < 0.5
try:
    sandwich.linear_regression([[1.0]], y)
    raise AssertionError("row mismatch accepted")
except ValueError:
    pass
try:
    sandwich.logistic_regression(x, [0, 1, 0, 1, 1], max_iter=1)
    raise AssertionError("one iteration converged")
except sandwich.EstimationError:
    pass
"#);
}

#[test]
fn custom_psi_matches_builtin() {
    run(r#"
y = [0.3, -1.2, 2.5, 0.7, 1.1, -0.4]
custom = sandwich.estimate_custom(lambda t: [[v - t[0]] for v in y], [0.0], names=["mu"])
builtin = sandwich.mean(y)
assert abs(custom.theta[0] - builtin.theta[0]) < 1e-12
assert abs(custom.covariance[0][0] - builtin.covariance[0][0]) < 1e-12
assert custom["mu"] == custom.theta[0]
try:
    sandwich.estimate_custom(lambda t: [[1.0, 2.0]], [0.0])
    raise AssertionError("bad shape accepted")
except ValueError:
    pass
"#);
}

#[test]
fn config_document() {
    run(r#"
import json
doc = json.loads(sandwich.fit_config("family = mean\ndata.outcome = y\n", "y\n1\n2\n3\n4\n5\n"))
assert doc["parameters"][0]["estimate"] == 3.0
assert doc["solver"]["converged"] is True
assert sandwich.huber_g(5.0, 1.345) == 1.345
assert sandwich.huber_g(-0.5) == -0.5
"#);
}
