use nalgebra::DMatrix;

use super::check_theta_len;
use crate::error::{Error, Result};
use crate::estimator::EstimatingFunction;

/// Largest exponent passed to `exp` when forming odds; keeps weights finite.
const MAX_LOG_WEIGHT: f64 = 700.0;

/// `(1 − expit(xᵀβ)) / expit(xᵀβ)`, evaluated as `exp(−xᵀβ)`.
pub fn inverse_odds_weight(x_row: &[f64], beta: &[f64]) -> f64 {
    let eta: f64 = x_row.iter().zip(beta).map(|(x, b)| x * b).sum();
    (-eta).min(MAX_LOG_WEIGHT).exp()
}

/// Inverse-odds-weighted means of log-transformed variables over the sampled
/// rows: `ψᵢₘ = I(Sᵢ = 1) wᵢ(β) (ln Bᵢₘ − μₘ)`.
///
/// `β` is read from an upstream logistic block fitted to the sample
/// indicator, so the stacked sandwich carries its uncertainty into `μ`.
#[derive(Debug, Clone)]
pub struct InverseOddsWeightedMeans {
    x: DMatrix<f64>,
    sampled: Vec<bool>,
    /// `n × m`; rows outside the sample hold zeros.
    log_values: DMatrix<f64>,
    names: Vec<String>,
}

impl InverseOddsWeightedMeans {
    /// `values` holds the untransformed variables (`n × m`); only rows with
    /// `sample = 1` are read and those must be positive.
    pub fn new(values: &DMatrix<f64>, sample: &[f64], x: DMatrix<f64>) -> Result<Self> {
        let n = sample.len();
        if values.nrows() != n {
            return Err(Error::dims("value rows", n, values.nrows()));
        }
        if x.nrows() != n {
            return Err(Error::dims("weight design rows", n, x.nrows()));
        }
        if values.ncols() == 0 {
            return Err(Error::InvalidArgument("no variables to average".into()));
        }
        if let Some(i) = sample.iter().position(|s| *s != 0.0 && *s != 1.0) {
            return Err(Error::Domain(format!("sample[{i}] = {} is not 0 or 1", sample[i])));
        }
        let sampled: Vec<bool> = sample.iter().map(|s| *s == 1.0).collect();
        if !sampled.iter().any(|s| *s) {
            return Err(Error::Domain("no rows have sample = 1".into()));
        }
        let mut log_values = DMatrix::zeros(n, values.ncols());
        for i in (0..n).filter(|i| sampled[*i]) {
            for m in 0..values.ncols() {
                let v = values[(i, m)];
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Domain(format!(
                        "value in row {i}, column {m} must be positive to take logs, got {v}"
                    )));
                }
                log_values[(i, m)] = v.ln();
            }
        }
        let names = (0..values.ncols()).map(|m| format!("mu{m}")).collect();
        Ok(InverseOddsWeightedMeans {
            x,
            sampled,
            log_values,
            names,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        if names.len() == self.log_values.ncols() {
            self.names = names;
        }
        self
    }

    fn weights(&self, beta: &[f64]) -> Result<Vec<f64>> {
        if beta.len() != self.x.ncols() {
            return Err(Error::dims("weight model parameters", self.x.ncols(), beta.len()));
        }
        let mut row = vec![0.0; self.x.ncols()];
        let weights: Vec<f64> = (0..self.sampled.len())
            .map(|i| {
                if !self.sampled[i] {
                    return 0.0;
                }
                for (j, r) in row.iter_mut().enumerate() {
                    *r = self.x[(i, j)];
                }
                inverse_odds_weight(&row, beta)
            })
            .collect();
        if weights.iter().sum::<f64>() == 0.0 {
            return Err(Error::DegenerateWeights);
        }
        Ok(weights)
    }
}

impl EstimatingFunction for InverseOddsWeightedMeans {
    fn n_params(&self) -> usize {
        self.log_values.ncols()
    }

    fn n_obs(&self) -> usize {
        self.sampled.len()
    }

    fn n_inputs(&self) -> usize {
        self.x.ncols()
    }

    fn eval_with(&self, theta: &[f64], inputs: &[f64]) -> Result<DMatrix<f64>> {
        let m = self.log_values.ncols();
        check_theta_len("weighted means", m, theta)?;
        let w = self.weights(inputs)?;
        let n = self.sampled.len();
        let mut out = DMatrix::zeros(m, n);
        for i in (0..n).filter(|i| self.sampled[*i]) {
            for (k, mu) in theta.iter().enumerate() {
                out[(k, i)] = w[i] * (self.log_values[(i, k)] - mu);
            }
        }
        Ok(out)
    }

    fn tag(&self) -> &str {
        "inverse_odds_weighted_mean"
    }

    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }

    /// Weighted means at the starting weight-model parameters.
    fn default_init(&self, inputs: &[f64]) -> Vec<f64> {
        let m = self.log_values.ncols();
        let Ok(w) = self.weights(inputs) else {
            return vec![0.0; m];
        };
        let total: f64 = w.iter().sum();
        (0..m)
            .map(|k| {
                w.iter().enumerate().map(|(i, wi)| wi * self.log_values[(i, k)]).sum::<f64>()
                    / total
            })
            .collect()
    }
}
