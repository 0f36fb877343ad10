//! Central finite differences for vector-valued functions.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// How the per-coordinate step is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    /// `h_j = base_step`
    Absolute,
    /// `h_j = base_step · max(|x_j|, 1)`
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRule {
    pub mode: StepMode,
    pub base_step: f64,
}

impl Default for StepRule {
    /// Relative steps of `ε^(1/3)`, which balances truncation against roundoff
    /// for central differences.
    fn default() -> Self {
        StepRule {
            mode: StepMode::Relative,
            base_step: f64::EPSILON.cbrt(),
        }
    }
}

impl StepRule {
    pub fn relative(base_step: f64) -> Result<Self> {
        Self::new(StepMode::Relative, base_step)
    }

    pub fn absolute(base_step: f64) -> Result<Self> {
        Self::new(StepMode::Absolute, base_step)
    }

    pub fn new(mode: StepMode, base_step: f64) -> Result<Self> {
        if !(base_step > 0.0 && base_step.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "finite-difference step must be positive, got {base_step}"
            )));
        }
        Ok(StepRule { mode, base_step })
    }

    /// Step for coordinate value `x`, snapped so that `(x + h) - x == h`.
    pub fn step_for(&self, x: f64) -> f64 {
        let raw = match self.mode {
            StepMode::Absolute => self.base_step,
            StepMode::Relative => self.base_step * x.abs().max(1.0),
        };
        let snapped = (x + raw) - x;
        if snapped > 0.0 {
            snapped
        } else {
            raw
        }
    }
}

/// Central-difference Jacobian of `f` at `x`.
///
/// Entry `(i, j)` is `(f_i(x + h_j e_j) - f_i(x - h_j e_j)) / (2 h_j)`. The
/// number of rows is the length of `f(x)`; each column uses exactly two
/// evaluations, so the result does not depend on evaluation order.
pub fn jacobian_central<F>(mut f: F, x: &[f64], rule: &StepRule) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let v = x.len();
    let mut point = x.to_vec();
    let mut jac: Option<DMatrix<f64>> = None;

    for j in 0..v {
        let h = rule.step_for(x[j]);

        point[j] = x[j] + h;
        let forward = checked_eval(&mut f, &point)?;
        point[j] = x[j] - h;
        let backward = checked_eval(&mut f, &point)?;
        point[j] = x[j];

        if forward.len() != backward.len() {
            return Err(Error::dims("function output", forward.len(), backward.len()));
        }
        let jac = jac.get_or_insert_with(|| DMatrix::zeros(forward.len(), v));
        if jac.nrows() != forward.len() {
            return Err(Error::dims("function output", jac.nrows(), forward.len()));
        }
        for (i, (fp, fm)) in forward.iter().zip(&backward).enumerate() {
            jac[(i, j)] = (fp - fm) / (2.0 * h);
        }
    }

    match jac {
        Some(jac) => Ok(jac),
        None => {
            // zero-dimensional input: still report the output length
            let rows = checked_eval(&mut f, x)?.len();
            Ok(DMatrix::zeros(rows, 0))
        }
    }
}

fn checked_eval<F>(f: &mut F, point: &[f64]) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let out = f(point)?;
    if out.iter().all(|y| y.is_finite()) {
        Ok(out)
    } else {
        Err(Error::NonFiniteEvaluation {
            point: point.to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn polynomial_and_linear_components() {
        let f = |x: &[f64]| Ok(vec![x[0] * x[0], x[1]]);
        let jac = jacobian_central(f, &[3.0, 5.0], &StepRule::absolute(1e-5).unwrap()).unwrap();
        let expected = [[6.0, 0.0], [0.0, 1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((jac[(i, j)] - expected[i][j]).abs() < 1e-9, "{jac}");
            }
        }
    }

    #[test]
    fn identity_is_exact() {
        let x = [0.3, -12.5, 7.0e4];
        let jac = jacobian_central(|x: &[f64]| Ok(x.to_vec()), &x, &StepRule::default()).unwrap();
        assert_eq!(jac, DMatrix::identity(3, 3));
    }

    #[test]
    fn sine_matches_cosine() {
        let jac =
            jacobian_central(|x: &[f64]| Ok(vec![x[0].sin()]), &[0.7], &StepRule::default())
                .unwrap();
        assert!((jac[(0, 0)] - 0.7f64.cos()).abs() < 1e-8);
        assert!((jac[(0, 0)] - 0.7648422).abs() < 1e-7);
    }

    #[test]
    fn second_order_convergence() {
        let f = |x: &[f64]| Ok(vec![x[0].powi(3)]);
        let err = |base: f64| {
            let rule = StepRule::relative(base).unwrap();
            (jacobian_central(f, &[2.0], &rule).unwrap()[(0, 0)] - 12.0).abs()
        };
        let mut prev = err(1e-2);
        for k in 1..4 {
            let cur = err(1e-2 / 2f64.powi(k));
            let ratio = prev / cur;
            assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
            prev = cur;
        }
    }

    #[test]
    fn non_finite_is_reported() {
        let f = |x: &[f64]| Ok(vec![x[0].ln()]);
        let err = jacobian_central(f, &[0.0], &StepRule::absolute(1e-3).unwrap()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteEvaluation { .. }));
    }

    #[test]
    fn caller_point_is_untouched() {
        let x = vec![1.5, -2.0];
        let before = x.clone();
        let _ = jacobian_central(|p: &[f64]| Ok(vec![p[0] * p[1]; 2]), &x, &StepRule::default());
        assert_eq!(x, before);
    }

    #[test]
    fn step_rule_validation_and_snapping() {
        assert!(StepRule::relative(0.0).is_err());
        assert!(StepRule::absolute(-1.0).is_err());
        let rule = StepRule::default();
        for x in [0.0, 1.0, 3.3, -1234.5678, 1e8] {
            let h = rule.step_for(x);
            assert_eq!((x + h) - x, h);
        }
        assert!((StepRule::default().base_step - 6.055454e-6).abs() < 1e-11);
    }

    proptest! {
        #[test]
        fn affine_maps_are_recovered(
            a in proptest::collection::vec(-2.0f64..2.0, 9),
            b in proptest::collection::vec(-2.0f64..2.0, 3),
            x in proptest::collection::vec(-2.0f64..2.0, 3),
            relative in any::<bool>(),
            base in 1e-3f64..1e-1,
        ) {
            let a = DMatrix::from_row_slice(3, 3, &a);
            let f = |p: &[f64]| {
                let y = &a * nalgebra::DVector::from_column_slice(p);
                Ok(y.iter().zip(&b).map(|(y, b)| y + b).collect())
            };
            let mode = if relative { StepMode::Relative } else { StepMode::Absolute };
            let jac = jacobian_central(f, &x, &StepRule::new(mode, base).unwrap()).unwrap();
            prop_assert_eq!(jac.shape(), (3, 3));
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((jac[(i, j)] - a[(i, j)]).abs() < 1e-10,
                        "entry ({}, {}) {} vs {}", i, j, jac[(i, j)], a[(i, j)]);
                }
            }
        }
    }
}
