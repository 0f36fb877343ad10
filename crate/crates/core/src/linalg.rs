//! Dense LU with partial pivoting and an explicit singularity threshold.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot threshold: a pivot smaller than this times the largest
/// magnitude in its original row is treated as zero.
pub const PIVOT_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct Lu {
    lu: DMatrix<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::dims("square matrix columns", n, a.ncols()));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularJacobian {
                column: 0,
                pivot: f64::NAN,
            });
        }
        let scale: Vec<f64> = (0..n)
            .map(|i| a.row(i).iter().fold(0.0f64, |m, x| m.max(x.abs())))
            .collect();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();

        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            let row_scale = scale[perm[p]];
            if row_scale == 0.0 || pivot <= PIVOT_TOLERANCE * row_scale {
                return Err(Error::SingularJacobian { column: k, pivot });
            }
            if p != k {
                lu.swap_rows(p, k);
                perm.swap(p, k);
            }
            let diag = lu[(k, k)];
            for i in (k + 1)..n {
                let factor = lu[(i, k)] / diag;
                lu[(i, k)] = factor;
                if factor != 0.0 {
                    for j in (k + 1)..n {
                        lu[(i, j)] -= factor * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::dims("right-hand side", n, b.len()));
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[(i, i)];
        }
        Ok(x)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.solve(&e).expect("dimension checked");
            inv.set_column(j, &DVector::from_vec(col));
            e[j] = 0.0;
        }
        inv
    }
}

/// Numerical column rank from a column-pivoted QR factorisation.
pub fn column_rank(x: &DMatrix<f64>) -> usize {
    let p = x.ncols();
    if p == 0 || x.nrows() == 0 {
        return 0;
    }
    let r = x.clone().col_piv_qr().r();
    let diag: Vec<f64> = (0..r.nrows().min(p)).map(|i| r[(i, i)].abs()).collect();
    let largest = diag.iter().cloned().fold(0.0, f64::max);
    if largest == 0.0 {
        return 0;
    }
    let tol = largest * 1e-10 * (x.nrows().max(p) as f64);
    diag.iter().filter(|d| **d > tol).count()
}

/// Returns `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_with_pivoting() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 0.0]);
        let lu = Lu::factor(&a).unwrap();
        let x = lu.solve(&[3.0, 3.0, 3.0]).unwrap();
        for (xi, e) in x.iter().zip([1.0, 1.0, 1.0]) {
            assert!((xi - e).abs() < 1e-14);
        }
        let prod = &a * lu.inverse();
        assert!((prod - DMatrix::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(Lu::factor(&a), Err(Error::SingularJacobian { column: 1, .. })));
        let zero = DMatrix::zeros(2, 2);
        assert!(Lu::factor(&zero).is_err());
    }

    #[test]
    fn rank_detection() {
        let x = DMatrix::from_row_slice(4, 3, &[
            1.0, 1.0, 2.0, //
            1.0, 2.0, 3.0, //
            1.0, 3.0, 4.0, //
            1.0, 4.0, 5.0,
        ]);
        assert_eq!(column_rank(&x), 2);
        assert_eq!(column_rank(&x.columns(0, 2).into_owned()), 2);
    }
}
