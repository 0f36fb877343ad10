//! M-estimation for stacked estimating equations.
//!
//! An M-estimator is the root of `Σᵢ ψ(Zᵢ; θ) = 0` for a known vector-valued
//! estimating function `ψ`. This crate finds that root numerically and then
//! assembles the empirical sandwich variance `B⁻¹ F B⁻ᵀ` from
//!
//! * the bread `B = (1/n) Σᵢ −ψ′(Zᵢ; θ̂)`, approximated by central differences,
//! * the filling `F = (1/n) Σᵢ ψ(Zᵢ; θ̂) ψ(Zᵢ; θ̂)ᵀ`.
//!
//! Built-in estimating-equation families live in [`equations`]; any of them
//! can be combined with [`equations::Stack`] so that transformations of
//! parameters and nuisance models share one sandwich.
//!
//! ```
//! use sandwich::equations::Mean;
//! use sandwich::{estimate, SolverConfig};
//!
//! let ef = Mean::new(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
//! let fit = estimate(&ef, &[0.0], &SolverConfig::default()).unwrap();
//! assert!((fit.theta_hat[0] - 3.0).abs() < 1e-12);
//! assert!((fit.covariance[(0, 0)] - 0.4).abs() < 1e-12);
//! ```

pub mod cli;
pub mod config;
pub mod data;
pub mod datasets;
pub mod equations;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod numdiff;
pub mod replicate;
pub mod report;
pub mod rootfind;

pub use error::{Error, Result};
pub use estimator::{
    compute_bread, compute_filling, estimate, estimate_with_solver, sandwich, wald_ci,
    EstimatingFunction, MEstimationResult,
};
pub use numdiff::{jacobian_central, StepMode, StepRule};
pub use rootfind::{broyden_solve, newton_solve, Method, SolveReport, SolverConfig};
