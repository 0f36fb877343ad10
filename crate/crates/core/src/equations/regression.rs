use nalgebra::{DMatrix, DVector};

use super::{check_finite, check_theta_len, huber_g};
use crate::error::{Error, Result};
use crate::estimator::EstimatingFunction;
use crate::linalg::{column_rank, Lu};

/// Numerically stable inverse logit.
pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Builds an `n × p` design from columns, with a leading column of ones when
/// `intercept` is set.
pub fn design_matrix(n: usize, columns: &[&[f64]], intercept: bool) -> Result<DMatrix<f64>> {
    let p = columns.len() + usize::from(intercept);
    if p == 0 {
        return Err(Error::InvalidArgument("design has no columns".into()));
    }
    let mut x = DMatrix::zeros(n, p);
    let offset = usize::from(intercept);
    if intercept {
        x.column_mut(0).fill(1.0);
    }
    for (j, col) in columns.iter().enumerate() {
        if col.len() != n {
            return Err(Error::dims("design column length", n, col.len()));
        }
        for (i, v) in col.iter().enumerate() {
            x[(i, j + offset)] = *v;
        }
    }
    Ok(x)
}

fn check_design(x: &DMatrix<f64>, n_outcome: usize) -> Result<()> {
    if x.nrows() != n_outcome {
        return Err(Error::dims("design rows", n_outcome, x.nrows()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("design contains non-finite values".into()));
    }
    let rank = column_rank(x);
    if rank < x.ncols() {
        return Err(Error::RankDeficientDesign {
            rank,
            columns: x.ncols(),
        });
    }
    Ok(())
}

fn default_names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("alpha{j}")).collect()
}

/// Linear regression, least squares or Huber-robust:
/// `ψᵢ = g_k(yᵢ − xᵢᵀα) xᵢ`, with `k = ∞` for least squares.
#[derive(Debug, Clone)]
pub struct LinearRegression {
    x: DMatrix<f64>,
    y: Vec<f64>,
    k: f64,
    names: Vec<String>,
}

impl LinearRegression {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        Self::with_threshold(x, y, f64::INFINITY)
    }

    pub fn robust(x: DMatrix<f64>, y: Vec<f64>, k: f64) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::InvalidArgument(format!("k must be positive, got {k}")));
        }
        Self::with_threshold(x, y, k)
    }

    fn with_threshold(x: DMatrix<f64>, y: Vec<f64>, k: f64) -> Result<Self> {
        check_finite("y", &y)?;
        check_design(&x, y.len())?;
        let names = default_names(x.ncols());
        Ok(LinearRegression { x, y, k, names })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        if names.len() == self.x.ncols() {
            self.names = names;
        }
        self
    }

    pub fn is_robust(&self) -> bool {
        self.k.is_finite()
    }

    /// `(XᵀX)⁻¹ Xᵀ y`
    pub fn least_squares(&self) -> Result<Vec<f64>> {
        let xtx = self.x.transpose() * &self.x;
        let xty = self.x.transpose() * DVector::from_column_slice(&self.y);
        Lu::factor(&xtx)?.solve(xty.as_slice())
    }
}

impl EstimatingFunction for LinearRegression {
    fn n_params(&self) -> usize {
        self.x.ncols()
    }

    fn n_obs(&self) -> usize {
        self.y.len()
    }

    fn eval_with(&self, theta: &[f64], _inputs: &[f64]) -> Result<DMatrix<f64>> {
        check_theta_len("regression", self.x.ncols(), theta)?;
        let fitted = &self.x * DVector::from_column_slice(theta);
        let (n, p) = self.x.shape();
        let mut out = DMatrix::zeros(p, n);
        for i in 0..n {
            let r = huber_g(self.y[i] - fitted[i], self.k);
            for j in 0..p {
                out[(j, i)] = r * self.x[(i, j)];
            }
        }
        Ok(out)
    }

    fn tag(&self) -> &str {
        if self.is_robust() {
            "robust_linear"
        } else {
            "linear"
        }
    }

    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }

    /// Robust fits start from least squares: at zero every residual may be
    /// clipped, which leaves a zero Jacobian.
    fn default_init(&self, _inputs: &[f64]) -> Vec<f64> {
        if self.is_robust() {
            self.least_squares().unwrap_or_else(|_| vec![0.0; self.x.ncols()])
        } else {
            vec![0.0; self.x.ncols()]
        }
    }
}

/// Logistic regression score: `ψᵢ = (sᵢ − expit(xᵢᵀβ)) xᵢ`.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    x: DMatrix<f64>,
    s: Vec<f64>,
    names: Vec<String>,
}

impl LogisticRegression {
    pub fn new(x: DMatrix<f64>, s: Vec<f64>) -> Result<Self> {
        if let Some(i) = s.iter().position(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::Domain(format!("outcome[{i}] = {} is not 0 or 1", s[i])));
        }
        let ones = s.iter().filter(|v| **v == 1.0).count();
        if ones == 0 || ones == s.len() {
            return Err(Error::Domain("binary outcome has an empty class".into()));
        }
        check_design(&x, s.len())?;
        let names = (0..x.ncols()).map(|j| format!("beta{j}")).collect();
        Ok(LogisticRegression { x, s, names })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        if names.len() == self.x.ncols() {
            self.names = names;
        }
        self
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }
}

impl EstimatingFunction for LogisticRegression {
    fn n_params(&self) -> usize {
        self.x.ncols()
    }

    fn n_obs(&self) -> usize {
        self.s.len()
    }

    fn eval_with(&self, theta: &[f64], _inputs: &[f64]) -> Result<DMatrix<f64>> {
        check_theta_len("logistic", self.x.ncols(), theta)?;
        let eta = &self.x * DVector::from_column_slice(theta);
        let (n, p) = self.x.shape();
        let mut out = DMatrix::zeros(p, n);
        for i in 0..n {
            let r = self.s[i] - expit(eta[i]);
            for j in 0..p {
                out[(j, i)] = r * self.x[(i, j)];
            }
        }
        Ok(out)
    }

    fn tag(&self) -> &str {
        "logistic"
    }

    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }
}
