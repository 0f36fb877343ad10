//! Built-in estimating-equation families and the stacking combinator.
//!
//! | tag | type | parameters |
//! |-----|------|------------|
//! | `mean` | [`Mean`] | 1 |
//! | `robust_location` | [`RobustLocation`] | 1 |
//! | `linear` | [`LinearRegression`] | p |
//! | `robust_linear` | [`LinearRegression::robust`] | p |
//! | `logistic` | [`LogisticRegression`] | p |
//! | `loglogistic3`, `loglogistic4` | [`LogLogistic`] | 3 or 4 |
//! | `effective_concentration` | [`EffectiveConcentration`] | 1, reads the curve block |
//! | `inverse_odds_weighted_mean` | [`InverseOddsWeightedMeans`] | m, reads the logistic block |
//! | `stack` | [`Stack`] | sum of blocks |

mod dose_response;
mod location;
mod regression;
mod stack;
mod weighting;

pub use dose_response::{
    effective_concentration, loglogistic_gradient, loglogistic_mean, EffectiveConcentration,
    LogLogistic, LogLogisticKind,
};
pub use location::{huber_g, Mean, RobustLocation, HUBER_K};
pub use regression::{design_matrix, expit, LinearRegression, LogisticRegression};
pub use stack::{BlockEntry, BlockLayout, FixedInputs, Stack};
pub use weighting::{inverse_odds_weight, InverseOddsWeightedMeans};

use crate::error::{Error, Result};

pub(crate) fn check_theta_len(what: &str, expected: usize, theta: &[f64]) -> Result<()> {
    if theta.len() != expected {
        return Err(Error::dims(format!("{what} parameters"), expected, theta.len()));
    }
    Ok(())
}

pub(crate) fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::InvalidArgument(format!("{what}[{i}] is not finite"))),
        None => Ok(()),
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    match n {
        0 => 0.0,
        _ if n % 2 == 1 => sorted[n / 2],
        _ => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    }
}
