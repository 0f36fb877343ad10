use nalgebra::DMatrix;

use super::{check_finite, check_theta_len, median};
use crate::error::{Error, Result};
use crate::estimator::EstimatingFunction;

/// Huber's default tuning constant.
pub const HUBER_K: f64 = 1.345;

/// Huber's clipping function: `w` inside `[-k, k]`, `sign(w)·k` outside.
pub fn huber_g(w: f64, k: f64) -> f64 {
    if w.abs() <= k {
        w
    } else {
        k.copysign(w)
    }
}

/// `ψᵢ = yᵢ − μ`
#[derive(Debug, Clone)]
pub struct Mean {
    y: Vec<f64>,
}

impl Mean {
    pub fn new(y: Vec<f64>) -> Self {
        Mean { y }
    }

    pub fn try_new(y: Vec<f64>) -> Result<Self> {
        check_finite("y", &y)?;
        Ok(Mean { y })
    }
}

impl EstimatingFunction for Mean {
    fn n_params(&self) -> usize {
        1
    }

    fn n_obs(&self) -> usize {
        self.y.len()
    }

    fn eval_with(&self, theta: &[f64], _inputs: &[f64]) -> Result<DMatrix<f64>> {
        check_theta_len("mean", 1, theta)?;
        let mu = theta[0];
        Ok(DMatrix::from_iterator(1, self.y.len(), self.y.iter().map(|y| y - mu)))
    }

    fn tag(&self) -> &str {
        "mean"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["mean".into()]
    }
}

/// Huber location: `ψᵢ = g_k(yᵢ − μ)`.
#[derive(Debug, Clone)]
pub struct RobustLocation {
    y: Vec<f64>,
    k: f64,
}

impl RobustLocation {
    pub fn new(y: Vec<f64>, k: f64) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::InvalidArgument(format!("k must be positive, got {k}")));
        }
        check_finite("y", &y)?;
        Ok(RobustLocation { y, k })
    }

    pub fn k(&self) -> f64 {
        self.k
    }
}

impl EstimatingFunction for RobustLocation {
    fn n_params(&self) -> usize {
        1
    }

    fn n_obs(&self) -> usize {
        self.y.len()
    }

    fn eval_with(&self, theta: &[f64], _inputs: &[f64]) -> Result<DMatrix<f64>> {
        check_theta_len("robust location", 1, theta)?;
        let mu = theta[0];
        Ok(DMatrix::from_iterator(
            1,
            self.y.len(),
            self.y.iter().map(|y| huber_g(y - mu, self.k)),
        ))
    }

    fn tag(&self) -> &str {
        "robust_location"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["location".into()]
    }

    /// The sample median; starting at zero can leave every residual clipped,
    /// which makes the Jacobian vanish.
    fn default_init(&self, _inputs: &[f64]) -> Vec<f64> {
        vec![median(&self.y)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::estimate;
    use crate::rootfind::SolverConfig;

    #[test]
    fn huber_clipping() {
        assert_eq!(huber_g(0.5, HUBER_K), 0.5);
        assert_eq!(huber_g(3.0, HUBER_K), 1.345);
        assert_eq!(huber_g(-3.0, HUBER_K), -1.345);
        assert_eq!(huber_g(1.345, HUBER_K), 1.345);
        assert_eq!(huber_g(-7.0, f64::INFINITY), -7.0);
    }

    #[test]
    fn mean_contributions() {
        let ef = Mean::new(vec![2.0, 4.0, 6.0]);
        assert_eq!(ef.eval(&[4.0]).unwrap().as_slice(), &[-2.0, 0.0, 2.0]);
        let c = Mean::new(vec![1.5; 4]);
        assert!(c.eval(&[1.5]).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn wide_k_gives_mean() {
        let ef = RobustLocation::new(vec![1.0, 2.0, 3.0], 10.0).unwrap();
        let fit = estimate(&ef, &ef.default_init(&[]), &SolverConfig::default()).unwrap();
        assert!((fit.theta_hat[0] - 2.0).abs() < 1e-12);
    }

    /// Bisection on the monotone map μ ↦ Σ g_k(yᵢ − μ).
    fn bisect_location(y: &[f64], k: f64) -> f64 {
        let score = |mu: f64| y.iter().map(|v| huber_g(v - mu, k)).sum::<f64>();
        let (mut lo, mut hi) = (-1e3, 1e3);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if score(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn outlier_is_downweighted() {
        let y = vec![0.0, 0.0, 0.0, 0.0, 100.0];
        let ef = RobustLocation::new(y.clone(), 1.0).unwrap();
        let fit = estimate(&ef, &ef.default_init(&[]), &SolverConfig::default()).unwrap();
        let mu = fit.theta_hat[0];
        assert!(mu > 0.0 && mu < 20.0);
        // bisection oracle: 4·(−μ) + 1 = 0 ⇒ μ = 0.25
        let oracle = bisect_location(&y, 1.0);
        assert!((oracle - 0.25).abs() < 1e-12);
        assert!((mu - oracle).abs() < 1e-9);
    }

    #[test]
    fn sign_equivariance() {
        let y = vec![0.3, -1.2, 4.0, 2.2, 9.5, 0.0, 1.1];
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let cfg = SolverConfig::default();
        let a = RobustLocation::new(y, HUBER_K).unwrap();
        let b = RobustLocation::new(neg, HUBER_K).unwrap();
        let fa = estimate(&a, &a.default_init(&[]), &cfg).unwrap();
        let fb = estimate(&b, &b.default_init(&[]), &cfg).unwrap();
        assert!((fa.theta_hat[0] + fb.theta_hat[0]).abs() < 1e-9);
        assert!((fa.covariance[(0, 0)] - fb.covariance[(0, 0)]).abs() < 1e-9);
    }

    #[test]
    fn symmetric_data_returns_center() {
        let c = 3.7;
        let y: Vec<f64> = [-6.0, -2.5, -0.4, 0.0, 0.4, 2.5, 6.0].iter().map(|d| c + d).collect();
        for k in [0.1, 0.5, HUBER_K, 3.0, 50.0] {
            let ef = RobustLocation::new(y.clone(), k).unwrap();
            let fit = estimate(&ef, &[0.0 + c + 0.3], &SolverConfig::default()).unwrap();
            assert!((fit.theta_hat[0] - c).abs() < 1e-9, "k = {k}");
        }
    }

    #[test]
    fn rejects_bad_k() {
        assert!(RobustLocation::new(vec![1.0, 2.0], 0.0).is_err());
        assert!(RobustLocation::new(vec![1.0, 2.0], -1.0).is_err());
        assert!(RobustLocation::new(vec![1.0, f64::NAN], 1.0).is_err());
    }
}
