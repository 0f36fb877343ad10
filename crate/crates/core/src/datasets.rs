//! Data shipped with the crate.

use crate::data::Dataset;

/// Root length of ryegrass (`rootl`, cm) after exposure to ferulic acid at
/// concentration `conc` (mM); 24 observations, six controls at zero.
pub const RYEGRASS_CSV: &str = include_str!("../data/ryegrass.csv");

pub fn ryegrass() -> Dataset {
    Dataset::from_csv_str(RYEGRASS_CSV).expect("bundled ryegrass data parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ryegrass_shape() {
        let d = ryegrass();
        assert_eq!(d.n_rows(), 24);
        let conc = d.column("conc").unwrap();
        assert_eq!(conc.iter().filter(|c| **c == 0.0).count(), 6);
        assert_eq!(conc.iter().cloned().fold(0.0, f64::max), 30.0);
    }
}
