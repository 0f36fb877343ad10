//! Log-logistic dose-response curves and effective concentrations.
//!
//! The mean response at dose `D` is
//!
//! ```text
//! f(D; γ) = γ₄ + (γ₃ − γ₄) / (1 + exp(γ₂ (ln D − ln γ₁)))
//! ```
//!
//! with `γ₁` the dose giving half the effect, `γ₂` the steepness, `γ₃` the
//! upper limit and `γ₄` the lower limit. The three-parameter model fixes
//! `γ₄ = 0`. At `D = 0` the curve takes its limit: `γ₃` when `γ₂ > 0`.

use nalgebra::DMatrix;

use super::{check_finite, check_theta_len, expit, median};
use crate::error::{Error, Result};
use crate::estimator::EstimatingFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogLogisticKind {
    /// Lower limit fixed at zero.
    Three,
    Four,
}

impl LogLogisticKind {
    pub fn n_params(self) -> usize {
        match self {
            LogLogisticKind::Three => 3,
            LogLogisticKind::Four => 4,
        }
    }

    pub fn from_n_params(n: usize) -> Result<Self> {
        match n {
            3 => Ok(LogLogisticKind::Three),
            4 => Ok(LogLogisticKind::Four),
            other => Err(Error::InvalidArgument(format!(
                "log-logistic models have 3 or 4 parameters, got {other}"
            ))),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            LogLogisticKind::Three => "loglogistic3",
            LogLogisticKind::Four => "loglogistic4",
        }
    }
}

/// Share of the range `γ₃ − γ₄` remaining at `dose`, and its derivative with
/// respect to `(γ₁, γ₂)`.
fn upper_share(dose: f64, gamma: &[f64]) -> Result<(f64, f64, f64)> {
    let (ec50, slope) = (gamma[0], gamma[1]);
    if !(ec50 > 0.0) {
        return Err(Error::Domain(format!("half-effect dose must be positive, got {ec50}")));
    }
    if !(dose >= 0.0) {
        return Err(Error::Domain(format!("dose must be nonnegative, got {dose}")));
    }
    if dose == 0.0 {
        return match slope {
            s if s > 0.0 => Ok((1.0, 0.0, 0.0)),
            s if s < 0.0 => Ok((0.0, 0.0, 0.0)),
            _ => Err(Error::Domain("zero steepness is undefined at zero dose".into())),
        };
    }
    let log_ratio = dose.ln() - ec50.ln();
    let t = slope * log_ratio;
    let share = expit(-t);
    let dshare_dt = -share * expit(t);
    Ok((share, dshare_dt * (-slope / ec50), dshare_dt * log_ratio))
}

fn check_gamma(gamma: &[f64]) -> Result<()> {
    if gamma.len() != 3 && gamma.len() != 4 {
        return Err(Error::dims("log-logistic parameters", 4, gamma.len()));
    }
    Ok(())
}

fn limits(gamma: &[f64]) -> (f64, f64) {
    (gamma[2], gamma.get(3).copied().unwrap_or(0.0))
}

/// Mean response; `gamma` has three or four entries.
pub fn loglogistic_mean(dose: f64, gamma: &[f64]) -> Result<f64> {
    check_gamma(gamma)?;
    let (share, _, _) = upper_share(dose, gamma)?;
    let (upper, lower) = limits(gamma);
    Ok(lower + (upper - lower) * share)
}

/// Analytic gradient of [`loglogistic_mean`] with respect to `gamma`.
pub fn loglogistic_gradient(dose: f64, gamma: &[f64]) -> Result<Vec<f64>> {
    Ok(mean_and_gradient(dose, gamma)?.1)
}

fn mean_and_gradient(dose: f64, gamma: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_gamma(gamma)?;
    let (share, dshare_dec50, dshare_dslope) = upper_share(dose, gamma)?;
    let (upper, lower) = limits(gamma);
    let range = upper - lower;
    let mut grad = vec![range * dshare_dec50, range * dshare_dslope, share];
    if gamma.len() == 4 {
        grad.push(1.0 - share);
    }
    Ok((lower + range * share, grad))
}

/// `EC_δ = γ₁ (δ / (100 − δ))^(1/γ₂)`: the dose at which the response has
/// dropped δ percent of the way from the upper toward the lower limit.
pub fn effective_concentration(delta: f64, gamma: &[f64]) -> Result<f64> {
    check_delta(delta)?;
    let (ec50, slope) = (gamma[0], gamma[1]);
    if !(ec50 > 0.0) {
        return Err(Error::Domain(format!("half-effect dose must be positive, got {ec50}")));
    }
    if slope == 0.0 || !slope.is_finite() {
        return Err(Error::Domain(format!("steepness must be nonzero, got {slope}")));
    }
    Ok(ec50 * (delta / (100.0 - delta)).powf(1.0 / slope))
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 100.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("delta must lie in (0, 100), got {delta}")))
    }
}

/// Nonlinear least-squares normal equations `ψᵢ = (Rᵢ − f(Dᵢ; γ)) ∇_γ f(Dᵢ; γ)`.
#[derive(Debug, Clone)]
pub struct LogLogistic {
    dose: Vec<f64>,
    response: Vec<f64>,
    kind: LogLogisticKind,
}

impl LogLogistic {
    pub fn new(dose: Vec<f64>, response: Vec<f64>, kind: LogLogisticKind) -> Result<Self> {
        if dose.len() != response.len() {
            return Err(Error::dims("response length", dose.len(), response.len()));
        }
        check_finite("dose", &dose)?;
        check_finite("response", &response)?;
        if let Some(i) = dose.iter().position(|d| *d < 0.0) {
            return Err(Error::Domain(format!("dose[{i}] = {} is negative", dose[i])));
        }
        if !dose.iter().any(|d| *d > 0.0) {
            return Err(Error::Domain("at least one positive dose is required".into()));
        }
        Ok(LogLogistic {
            dose,
            response,
            kind,
        })
    }

    pub fn kind(&self) -> LogLogisticKind {
        self.kind
    }
}

impl EstimatingFunction for LogLogistic {
    fn n_params(&self) -> usize {
        self.kind.n_params()
    }

    fn n_obs(&self) -> usize {
        self.dose.len()
    }

    fn eval_with(&self, theta: &[f64], _inputs: &[f64]) -> Result<DMatrix<f64>> {
        let v = self.kind.n_params();
        check_theta_len(self.kind.tag(), v, theta)?;
        let mut out = DMatrix::zeros(v, self.dose.len());
        for (i, (&d, &r)) in self.dose.iter().zip(&self.response).enumerate() {
            let (mean, grad) = mean_and_gradient(d, theta)?;
            let resid = r - mean;
            for (j, g) in grad.iter().enumerate() {
                out[(j, i)] = resid * g;
            }
        }
        Ok(out)
    }

    fn tag(&self) -> &str {
        self.kind.tag()
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = vec!["ec50".to_string(), "steepness".into(), "upper".into()];
        if self.kind == LogLogisticKind::Four {
            names.push("lower".into());
        }
        names
    }

    /// Upper (and lower) limit from the response range; `γ₁`, `γ₂` from a
    /// straight-line fit of the logit-transformed responses on log dose.
    /// Falls back to the median positive dose and unit steepness when that
    /// line is degenerate.
    fn default_init(&self, _inputs: &[f64]) -> Vec<f64> {
        let max = self.response.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.response.iter().copied().fold(f64::INFINITY, f64::min);
        let lower = match self.kind {
            LogLogisticKind::Three => 0.0,
            LogLogisticKind::Four => min,
        };
        let (ec50, steepness) = self.self_start(lower, max).unwrap_or_else(|| {
            let positive: Vec<f64> = self.dose.iter().copied().filter(|d| *d > 0.0).collect();
            (median(&positive), 1.0)
        });
        let mut init = vec![ec50, steepness, max];
        if self.kind == LogLogisticKind::Four {
            init.push(min);
        }
        init
    }
}

impl LogLogistic {
    /// With `f` between `lower` and `upper`,
    /// `ln((upper − f) / (f − lower)) = γ₂ ln D − γ₂ ln γ₁`, so a least-squares
    /// line through the transformed points gives `(γ₁, γ₂)`.
    fn self_start(&self, lower: f64, max: f64) -> Option<(f64, f64)> {
        let upper = max + 0.05 * (max - lower).abs().max(f64::MIN_POSITIVE);
        let points: Vec<(f64, f64)> = self
            .dose
            .iter()
            .zip(&self.response)
            .filter(|(d, r)| **d > 0.0 && **r > lower && **r < upper)
            .map(|(d, r)| (d.ln(), ((upper - r) / (r - lower)).ln()))
            .collect();
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if points.len() < 2 || sxx <= 0.0 {
            return None;
        }
        let slope = sxy / sxx;
        let ec50 = (mx - my / slope).exp();
        (slope.is_finite() && slope != 0.0 && ec50.is_finite() && ec50 > 0.0).then_some((ec50, slope))
    }
}

/// `ψᵢ = EC_δ − γ₁ (δ / (100 − δ))^(1/γ₂)` for every observation.
///
/// Reads `(γ₁, γ₂, γ₃[, γ₄])` from an upstream log-logistic block; the
/// equation does not touch the data, so the same value is replicated across
/// all `n` columns.
#[derive(Debug, Clone)]
pub struct EffectiveConcentration {
    delta: f64,
    n_obs: usize,
    kind: LogLogisticKind,
}

impl EffectiveConcentration {
    pub fn new(delta: f64, n_obs: usize, kind: LogLogisticKind) -> Result<Self> {
        check_delta(delta)?;
        Ok(EffectiveConcentration { delta, n_obs, kind })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

impl EstimatingFunction for EffectiveConcentration {
    fn n_params(&self) -> usize {
        1
    }

    fn n_obs(&self) -> usize {
        self.n_obs
    }

    fn n_inputs(&self) -> usize {
        self.kind.n_params()
    }

    fn eval_with(&self, theta: &[f64], inputs: &[f64]) -> Result<DMatrix<f64>> {
        check_theta_len("effective concentration", 1, theta)?;
        if inputs.len() != self.kind.n_params() {
            return Err(Error::dims("curve parameters", self.kind.n_params(), inputs.len()));
        }
        let value = theta[0] - effective_concentration(self.delta, inputs)?;
        Ok(DMatrix::from_element(1, self.n_obs, value))
    }

    fn tag(&self) -> &str {
        "effective_concentration"
    }

    fn param_names(&self) -> Vec<String> {
        vec![format!("ec{}", self.delta)]
    }

    fn default_init(&self, inputs: &[f64]) -> Vec<f64> {
        vec![effective_concentration(self.delta, inputs).unwrap_or(1.0)]
    }
}
