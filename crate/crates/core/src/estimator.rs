//! The M-estimation engine: root finding followed by the empirical sandwich.

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, Lu};
use crate::numdiff::{jacobian_central, StepRule};
use crate::rootfind::{self, max_norm, SolveReport, SolverConfig};

/// A vector of estimating equations evaluated over every observation.
///
/// `eval_with` returns the `v × n` matrix whose column `i` is `ψ(Zᵢ; θ)`.
/// Blocks that read parameters owned by an earlier block of a stack (for
/// example a transformation of fitted curve parameters) declare how many of
/// them they need through [`n_inputs`](Self::n_inputs) and receive them as
/// `inputs`; self-contained families ignore that argument.
pub trait EstimatingFunction: Send + Sync {
    /// Number of equations, equal to the number of parameters this block owns.
    fn n_params(&self) -> usize;

    fn n_obs(&self) -> usize;

    fn n_inputs(&self) -> usize {
        0
    }

    fn eval_with(&self, theta: &[f64], inputs: &[f64]) -> Result<DMatrix<f64>>;

    fn eval(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.eval_with(theta, &[])
    }

    /// Family tag used in layouts and result documents.
    fn tag(&self) -> &str {
        "custom"
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.n_params()).map(|j| format!("theta{j}")).collect()
    }

    /// Starting values given starting values for the upstream inputs.
    fn default_init(&self, _inputs: &[f64]) -> Vec<f64> {
        vec![0.0; self.n_params()]
    }
}

impl<T: EstimatingFunction + ?Sized> EstimatingFunction for Box<T> {
    fn n_params(&self) -> usize {
        (**self).n_params()
    }
    fn n_obs(&self) -> usize {
        (**self).n_obs()
    }
    fn n_inputs(&self) -> usize {
        (**self).n_inputs()
    }
    fn eval_with(&self, theta: &[f64], inputs: &[f64]) -> Result<DMatrix<f64>> {
        (**self).eval_with(theta, inputs)
    }
    fn tag(&self) -> &str {
        (**self).tag()
    }
    fn param_names(&self) -> Vec<String> {
        (**self).param_names()
    }
    fn default_init(&self, inputs: &[f64]) -> Vec<f64> {
        (**self).default_init(inputs)
    }
}

#[derive(Debug, Clone)]
pub struct MEstimationResult {
    pub theta_hat: Vec<f64>,
    /// `B = (1/n) Σᵢ −ψ′(Zᵢ; θ̂)`
    pub bread: DMatrix<f64>,
    /// `F = (1/n) Σᵢ ψ(Zᵢ; θ̂) ψ(Zᵢ; θ̂)ᵀ`
    pub filling: DMatrix<f64>,
    /// `V = B⁻¹ F B⁻ᵀ`
    pub asymptotic_variance: DMatrix<f64>,
    /// `V / n`, the covariance used for standard errors and intervals.
    pub covariance: DMatrix<f64>,
    pub n_obs: usize,
    pub report: SolveReport,
}

impl MEstimationResult {
    pub fn std_errors(&self) -> Vec<f64> {
        self.covariance.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }

    pub fn confidence_intervals(&self, level: f64) -> Result<Vec<(f64, f64)>> {
        wald_ci(self, level)
    }
}

fn check_shape(ef: &dyn EstimatingFunction, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != ef.n_params() {
        return Err(Error::dims("estimating function rows", ef.n_params(), m.nrows()));
    }
    if m.ncols() != ef.n_obs() {
        return Err(Error::dims("estimating function columns", ef.n_obs(), m.ncols()));
    }
    Ok(())
}

fn checked_eval(ef: &dyn EstimatingFunction, theta: &[f64]) -> Result<DMatrix<f64>> {
    let m = ef.eval(theta)?;
    check_shape(ef, &m)?;
    Ok(m)
}

fn summed(ef: &dyn EstimatingFunction, theta: &[f64]) -> Result<Vec<f64>> {
    let m = checked_eval(ef, theta)?;
    Ok(m.row_iter().map(|r| r.iter().sum()).collect())
}

fn check_theta(ef: &dyn EstimatingFunction, theta: &[f64]) -> Result<()> {
    if ef.n_inputs() != 0 {
        return Err(Error::InvalidArgument(format!(
            "'{}' reads {} upstream parameters; stack it after the block that owns them",
            ef.tag(),
            ef.n_inputs()
        )));
    }
    if theta.len() != ef.n_params() {
        return Err(Error::dims("parameter vector", ef.n_params(), theta.len()));
    }
    Ok(())
}

/// Solves `Σᵢ ψ(Zᵢ; θ) = 0` with the solver named in `cfg`, then computes the
/// sandwich at the root.
pub fn estimate(
    ef: &dyn EstimatingFunction,
    init: &[f64],
    cfg: &SolverConfig,
) -> Result<MEstimationResult> {
    estimate_with_solver(ef, init, cfg, |f, x0| rootfind::solve(f, x0, cfg))
}

/// Like [`estimate`] but with a caller-supplied root finder.
///
/// The solver receives the summed estimating equations and the starting
/// point. Whatever it returns is re-checked against `cfg.tol` before the
/// sandwich is assembled.
pub fn estimate_with_solver<S>(
    ef: &dyn EstimatingFunction,
    init: &[f64],
    cfg: &SolverConfig,
    solver: S,
) -> Result<MEstimationResult>
where
    S: FnOnce(&mut dyn FnMut(&[f64]) -> Result<Vec<f64>>, &[f64]) -> Result<SolveReport>,
{
    check_theta(ef, init)?;
    cfg.validate()?;
    if ef.n_obs() < 2 {
        return Err(Error::InvalidArgument(format!(
            "at least two observations are required, got {}",
            ef.n_obs()
        )));
    }
    let mut objective = |theta: &[f64]| summed(ef, theta);
    let mut report = solver(&mut objective, init)?;
    if report.root.len() != ef.n_params() {
        return Err(Error::dims("solver root", ef.n_params(), report.root.len()));
    }

    let residual = max_norm(&summed(ef, &report.root)?);
    report.residual_norm = residual;
    report.converged = residual <= cfg.tol;
    if !report.converged {
        return Err(Error::NoConvergence { report });
    }

    let theta = report.root.clone();
    let n = ef.n_obs();
    let bread = compute_bread(ef, &theta, &cfg.step_rule)?;
    let filling = compute_filling(ef, &theta)?;
    let (asymptotic_variance, covariance) = sandwich(&bread, &filling, n)?;
    Ok(MEstimationResult {
        theta_hat: theta,
        bread,
        filling,
        asymptotic_variance,
        covariance,
        n_obs: n,
        report,
    })
}

/// `−(1/n)` times the central-difference Jacobian of the summed equations.
pub fn compute_bread(
    ef: &dyn EstimatingFunction,
    theta: &[f64],
    rule: &StepRule,
) -> Result<DMatrix<f64>> {
    check_theta(ef, theta)?;
    let jac = jacobian_central(|t: &[f64]| summed(ef, t), theta, rule)?;
    Ok(jac * (-1.0 / ef.n_obs() as f64))
}

/// `(1/n) M Mᵀ` with `M = ψ(·; θ)`; each entry sums observations in order.
pub fn compute_filling(ef: &dyn EstimatingFunction, theta: &[f64]) -> Result<DMatrix<f64>> {
    check_theta(ef, theta)?;
    let m = checked_eval(ef, theta)?;
    let v = m.nrows();
    let mut filling = DMatrix::zeros(v, v);
    for a in 0..v {
        for b in a..v {
            let s: f64 = m.row(a).iter().zip(m.row(b).iter()).map(|(x, y)| x * y).sum();
            filling[(a, b)] = s;
            filling[(b, a)] = s;
        }
    }
    Ok(filling / ef.n_obs() as f64)
}

/// Returns `(V, V/n)` with `V = B⁻¹ F B⁻ᵀ`, both symmetrized.
pub fn sandwich(
    bread: &DMatrix<f64>,
    filling: &DMatrix<f64>,
    n: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if bread.shape() != filling.shape() {
        return Err(Error::dims("filling dimension", bread.nrows(), filling.nrows()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let inv = Lu::factor(bread).map_err(|_| Error::SingularBread)?.inverse();
    let v = symmetrize(&(&inv * filling * inv.transpose()));
    let cov = symmetrize(&(&v / n as f64));
    Ok((v, cov))
}

/// Two-sided Wald intervals `θ̂ⱼ ± z · sqrt(covⱼⱼ)`.
pub fn wald_ci(result: &MEstimationResult, level: f64) -> Result<Vec<(f64, f64)>> {
    let z = normal_quantile_two_sided(level)?;
    Ok(result
        .theta_hat
        .iter()
        .zip(result.std_errors())
        .map(|(t, se)| (t - z * se, t + z * se))
        .collect())
}

/// The `1 − (1 − level)/2` quantile of the standard normal.
pub fn normal_quantile_two_sided(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(1.0 - (1.0 - level) / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equations::Mean;

    #[test]
    fn sample_mean() {
        let ef = Mean::new(vec![2.0, 4.0, 6.0]);
        let fit = estimate(&ef, &[0.0], &SolverConfig::default()).unwrap();
        assert!((fit.theta_hat[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn mean_bread_filling_and_covariance() {
        let ef = Mean::new(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let fit = estimate(&ef, &[0.0], &SolverConfig::default()).unwrap();
        assert!((fit.theta_hat[0] - 3.0).abs() < 1e-12);
        assert!((fit.bread[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((fit.filling[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((fit.asymptotic_variance[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((fit.covariance[(0, 0)] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn filling_of_duplicated_rows_is_constant() {
        let m1 = Mean::new(vec![1.0, 2.0, 7.0]);
        let m2 = Mean::new(vec![1.0, 2.0, 7.0]);
        let stack = crate::equations::Stack::new().push(m1).unwrap().push(m2).unwrap();
        let f = compute_filling(&stack, &[1.5, 1.5]).unwrap();
        let first = f[(0, 0)];
        assert!(f.iter().all(|x| *x == first));
        let zero = compute_filling(&Mean::new(vec![3.0; 4]), &[3.0]).unwrap();
        assert_eq!(zero[(0, 0)], 0.0);
    }

    #[test]
    fn identity_sandwich() {
        let i = DMatrix::identity(3, 3);
        let (v, cov) = sandwich(&i, &i, 4).unwrap();
        assert_eq!(v, i);
        assert_eq!(cov, i / 4.0);
    }

    #[test]
    fn singular_bread() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let err = sandwich(&b, &DMatrix::identity(2, 2), 3).unwrap_err();
        assert!(matches!(err, Error::SingularBread));
    }

    fn fake_result(theta: f64, var: f64) -> MEstimationResult {
        MEstimationResult {
            theta_hat: vec![theta],
            bread: DMatrix::identity(1, 1),
            filling: DMatrix::from_element(1, 1, var),
            asymptotic_variance: DMatrix::from_element(1, 1, var),
            covariance: DMatrix::from_element(1, 1, var),
            n_obs: 1,
            report: SolveReport {
                root: vec![theta],
                iterations: 0,
                residual_norm: 0.0,
                converged: true,
                residual_history: vec![],
            },
        }
    }

    #[test]
    fn wald_intervals() {
        let (lo, hi) = wald_ci(&fake_result(0.0, 1.0), 0.95).unwrap()[0];
        // Φ⁻¹(0.975)
        assert!((hi - 1.959963984540054).abs() < 1e-6);
        assert!((lo + 1.959963984540054).abs() < 1e-6);

        let (lo, hi) = wald_ci(&fake_result(1.86, (1.0f64 / 7.0).powi(2)), 0.95).unwrap()[0];
        assert_eq!(format!("{lo:.2} {hi:.2}"), "1.58 2.14");

        let (lo, hi) = wald_ci(&fake_result(2.5, 0.0), 0.9).unwrap()[0];
        assert_eq!((lo, hi), (2.5, 2.5));

        assert!(wald_ci(&fake_result(0.0, 1.0), 1.0).is_err());
    }

    #[test]
    fn custom_solver_is_rechecked() {
        let ef = Mean::new(vec![1.0, 2.0, 3.0]);
        let cfg = SolverConfig::default();
        let fit = estimate_with_solver(&ef, &[0.0], &cfg, |_, _| {
            Ok(SolveReport {
                root: vec![2.0],
                iterations: 0,
                residual_norm: f64::NAN,
                converged: false,
                residual_history: vec![],
            })
        })
        .unwrap();
        assert_eq!(fit.theta_hat, vec![2.0]);
        assert!(fit.report.converged);

        let err = estimate_with_solver(&ef, &[0.0], &cfg, |_, _| {
            Ok(SolveReport {
                root: vec![2.5],
                iterations: 0,
                residual_norm: 0.0,
                converged: true,
                residual_history: vec![],
            })
        })
        .unwrap_err();
        assert!(matches!(err, Error::NoConvergence { .. }));
    }

    #[test]
    fn bisection_solver_plugs_in() {
        let ef = Mean::new(vec![1.0, 5.0, 6.0]);
        let cfg = SolverConfig::default();
        let fit = estimate_with_solver(&ef, &[0.0], &cfg, |f, _| {
            let (mut lo, mut hi) = (-100.0, 100.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(&[mid])?[0] > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(SolveReport {
                root: vec![0.5 * (lo + hi)],
                iterations: 200,
                residual_norm: 0.0,
                converged: true,
                residual_history: vec![],
            })
        })
        .unwrap();
        assert!((fit.theta_hat[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_checks() {
        let ef = Mean::new(vec![1.0, 2.0]);
        let err = estimate(&ef, &[0.0, 1.0], &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        let tiny = Mean::new(vec![1.0]);
        assert!(estimate(&tiny, &[0.0], &SolverConfig::default()).is_err());
    }
}
