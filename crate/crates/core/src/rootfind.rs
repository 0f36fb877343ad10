//! Root finding for `Σᵢ ψ(Zᵢ; θ) = 0`.
//!
//! Both solvers share the same stopping rule (max-norm of the residual at or
//! below `tol`) and the same backtracking line search, which halves the step
//! until the residual max-norm falls below a reference value or the step
//! factor drops below 2⁻¹⁰. The reference is the largest residual norm among
//! the last few iterates, so an occasional increase is tolerated; strict
//! monotone descent stalls in curved valleys such as Rosenbrock's.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Lu;
use crate::numdiff::{jacobian_central, StepRule};

const MIN_STEP_FACTOR: f64 = 1.0 / 1024.0;

/// Trial points are compared against the largest residual norm among this
/// many most recent iterates.
const NONMONOTONE_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Newton,
    Broyden,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Newton => "newton",
            Method::Broyden => "broyden",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "newton" => Ok(Method::Newton),
            "broyden" => Ok(Method::Broyden),
            other => Err(format!("unknown solver method '{other}' (expected newton or broyden)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    /// Convergence threshold on the max-norm of the residual.
    pub tol: f64,
    pub max_iter: usize,
    pub step_rule: StepRule,
    /// Backtracking line search.
    pub damping: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Newton,
            tol: 1e-9,
            max_iter: 200,
            step_rule: StepRule::default(),
            damping: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub root: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
    /// Residual max-norm at the start point and after every iteration.
    pub residual_history: Vec<f64>,
}

/// Dispatches on `cfg.method`.
pub fn solve<F>(f: F, x0: &[f64], cfg: &SolverConfig) -> Result<SolveReport>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    match cfg.method {
        Method::Newton => newton_solve(f, x0, cfg),
        Method::Broyden => broyden_solve(f, x0, cfg),
    }
}

/// Damped Newton iteration with a central-difference Jacobian at every step.
pub fn newton_solve<F>(mut f: F, x0: &[f64], cfg: &SolverConfig) -> Result<SolveReport>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    let mut state = State::start(&mut f, x0)?;
    let mut last_lu = None;
    while state.norm > cfg.tol {
        if state.iterations == cfg.max_iter {
            return Err(state.no_convergence());
        }
        let jac = jacobian_central(&mut f, &state.x, &cfg.step_rule)?;
        let lu = Lu::factor(&jac)?;
        let step = lu.solve(&state.fx)?;
        let trial = line_search(&mut f, &state.x, &step, state.reference(), cfg.damping)
            .ok_or_else(|| state.no_convergence())?;
        state.accept(trial.x, trial.fx);
        last_lu = Some(lu);
    }
    if let Some(lu) = last_lu {
        state.refine(&mut f, &lu);
    }
    Ok(state.converged())
}

/// Broyden's "good" quasi-Newton method.
///
/// The initial Jacobian comes from central differences; it is refreshed the
/// same way whenever the secant approximation fails to produce a descent step
/// or becomes singular.
pub fn broyden_solve<F>(mut f: F, x0: &[f64], cfg: &SolverConfig) -> Result<SolveReport>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    let mut state = State::start(&mut f, x0)?;
    if state.norm <= cfg.tol {
        return Ok(state.converged());
    }
    let mut jac = jacobian_central(&mut f, &state.x, &cfg.step_rule)?;
    let mut fresh = true;

    while state.norm > cfg.tol {
        if state.iterations == cfg.max_iter {
            return Err(state.no_convergence());
        }
        let step = match Lu::factor(&jac).and_then(|lu| lu.solve(&state.fx)) {
            Ok(step) => step,
            Err(e) if fresh => return Err(e),
            Err(_) => {
                jac = jacobian_central(&mut f, &state.x, &cfg.step_rule)?;
                fresh = true;
                continue;
            }
        };
        let trial = match line_search(&mut f, &state.x, &step, state.reference(), cfg.damping) {
            Some(t) if t.decreased || fresh => t,
            _ => {
                jac = jacobian_central(&mut f, &state.x, &cfg.step_rule)?;
                fresh = true;
                state.iterations += 1;
                state.history.push(state.norm);
                continue;
            }
        };

        let s = DVector::from_iterator(step.len(), state.x.iter().zip(&trial.x).map(|(a, b)| b - a));
        let y = DVector::from_iterator(
            step.len(),
            state.fx.iter().zip(&trial.fx).map(|(a, b)| b - a),
        );
        let ss = s.dot(&s);
        if ss > 0.0 {
            let correction: DMatrix<f64> = (y - &jac * &s) * s.transpose() / ss;
            jac += correction;
            fresh = false;
        }
        state.accept(trial.x, trial.fx);
    }
    if let Ok(lu) = Lu::factor(&jac) {
        state.refine(&mut f, &lu);
    }
    Ok(state.converged())
}

/// Extra solves with the final Jacobian once the tolerance is met. Each is
/// kept only if it strictly lowers the residual, and none counts as an
/// iteration; they remove the roundoff left by a finite-difference Jacobian.
const REFINEMENT_STEPS: usize = 3;

struct State {
    x: Vec<f64>,
    fx: Vec<f64>,
    norm: f64,
    iterations: usize,
    best: (Vec<f64>, f64),
    history: Vec<f64>,
}

impl State {
    fn start<F>(f: &mut F, x0: &[f64]) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        if x0.is_empty() {
            return Err(Error::InvalidArgument("starting point is empty".into()));
        }
        let fx = f(x0)?;
        if fx.len() != x0.len() {
            return Err(Error::dims("residual vector", x0.len(), fx.len()));
        }
        if fx.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation { point: x0.to_vec() });
        }
        let norm = max_norm(&fx);
        Ok(State {
            x: x0.to_vec(),
            fx,
            norm,
            iterations: 0,
            best: (x0.to_vec(), norm),
            history: vec![norm],
        })
    }

    fn reference(&self) -> f64 {
        let start = self.history.len().saturating_sub(NONMONOTONE_WINDOW);
        self.history[start..].iter().cloned().fold(0.0, f64::max)
    }

    fn accept(&mut self, x: Vec<f64>, fx: Vec<f64>) {
        self.norm = max_norm(&fx);
        self.x = x;
        self.fx = fx;
        self.iterations += 1;
        self.history.push(self.norm);
        if self.norm < self.best.1 {
            self.best = (self.x.clone(), self.norm);
        }
    }

    fn refine<F>(&mut self, f: &mut F, lu: &Lu)
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        for _ in 0..REFINEMENT_STEPS {
            if self.norm == 0.0 {
                break;
            }
            let Ok(step) = lu.solve(&self.fx) else { break };
            let xt: Vec<f64> = self.x.iter().zip(&step).map(|(x, s)| x - s).collect();
            match f(&xt) {
                Ok(ft) if ft.iter().all(|v| v.is_finite()) && max_norm(&ft) < self.norm => {
                    self.norm = max_norm(&ft);
                    self.x = xt;
                    self.fx = ft;
                }
                _ => break,
            }
        }
    }

    fn converged(self) -> SolveReport {
        SolveReport {
            root: self.x,
            iterations: self.iterations,
            residual_norm: self.norm,
            converged: true,
            residual_history: self.history,
        }
    }

    fn no_convergence(&self) -> Error {
        Error::NoConvergence {
            report: SolveReport {
                root: self.best.0.clone(),
                iterations: self.iterations,
                residual_norm: self.best.1,
                converged: false,
                residual_history: self.history.clone(),
            },
        }
    }
}

struct Trial {
    x: Vec<f64>,
    fx: Vec<f64>,
    decreased: bool,
}

/// Tries `x - λ·step` for λ = 1, ½, …, 2⁻¹⁰. Returns the first trial whose
/// residual max-norm is below `reference` (any finite trial when undamped),
/// otherwise
/// the last finite trial. `None` if every trial point was outside the domain.
fn line_search<F>(f: &mut F, x: &[f64], step: &[f64], reference: f64, damping: bool) -> Option<Trial>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut lambda = 1.0;
    let mut fallback = None;
    while lambda >= MIN_STEP_FACTOR {
        let xt: Vec<f64> = x.iter().zip(step).map(|(xi, si)| xi - lambda * si).collect();
        if let Ok(ft) = f(&xt) {
            if ft.len() == x.len() && ft.iter().all(|v| v.is_finite()) {
                let decreased = max_norm(&ft) < reference;
                if decreased || !damping {
                    return Some(Trial { x: xt, fx: ft, decreased });
                }
                fallback = Some(Trial { x: xt, fx: ft, decreased: false });
            }
        }
        lambda *= 0.5;
    }
    fallback
}

pub(crate) fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
