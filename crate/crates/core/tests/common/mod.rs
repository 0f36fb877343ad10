//! Reference computations for the integration tests. Everything here is
//! written against plain `Vec`s so it shares no code with the library.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub struct LinearInstance {
    pub seed: u64,
    /// Row-major `n × p`; the first column is all ones.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl LinearInstance {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x[0].len()
    }

    pub fn design(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), self.p(), |i, j| self.x[i][j])
    }
}

/// `n ∈ [20, 200]`, `p ∈ [1, 5]` (intercept plus `p − 1` Gaussian
/// regressors), heteroskedastic noise.
pub fn linear_instance(seed: u64) -> LinearInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(20..=200);
    let p = rng.random_range(1..=5);
    let std = Normal::new(0.0, 1.0).unwrap();
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = vec![1.0];
        for _ in 1..p {
            row.push(2.0 * std.sample(&mut rng));
        }
        let mean: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
        let scale = 0.5 + row.last().unwrap().abs();
        y.push(mean + scale * std.sample(&mut rng));
        x.push(row);
    }
    LinearInstance { seed, x, y }
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, piv);
        let d = m[c][c];
        assert!(d.abs() > 1e-300, "singular matrix in oracle");
        for v in m[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n)
        .map(|i| (0..m).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect())
        .collect()
}

/// Least-squares coefficients and the HC0 covariance
/// `(XᵀX)⁻¹ (Σ eᵢ² xᵢxᵢᵀ) (XᵀX)⁻¹`.
pub fn ols_hc0(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = x[0].len();
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (row, yi) in x.iter().zip(y) {
        for a in 0..p {
            xty[a] += row[a] * yi;
            for b in 0..p {
                xtx[a][b] += row[a] * row[b];
            }
        }
    }
    let inv = invert(&xtx);
    let beta: Vec<f64> = (0..p).map(|a| (0..p).map(|b| inv[a][b] * xty[b]).sum()).collect();
    let mut meat = vec![vec![0.0; p]; p];
    for (row, yi) in x.iter().zip(y) {
        let e: f64 = yi - row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
        for a in 0..p {
            for b in 0..p {
                meat[a][b] += e * e * row[a] * row[b];
            }
        }
    }
    let cov = matmul(&matmul(&inv, &meat), &inv);
    (beta, cov)
}

/// `‖A − B‖_F / ‖B‖_F`.
pub fn relative_error(a: &DMatrix<f64>, b: &[Vec<f64>]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, row) in b.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            num += (a[(i, j)] - v).powi(2);
            den += v * v;
        }
    }
    (num / den).sqrt()
}

fn log_likelihood(x: &[f64], s: &[f64], b0: f64, b1: f64) -> f64 {
    x.iter()
        .zip(s)
        .map(|(xi, si)| {
            let eta = b0 + b1 * xi;
            // log(1 + e^η) without overflow
            let softplus = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
            si * eta - softplus
        })
        .sum()
}

/// Maximizes the logistic log-likelihood of `s ~ 1 + x` by a shrinking grid
/// search: evaluate a 21 × 21 grid, recentre on the best point, shrink the
/// half-width by 4, repeat until it is below 1e-9.
pub fn logistic_grid_mle(x: &[f64], s: &[f64]) -> (f64, f64) {
    let (mut c0, mut c1) = (0.0, 0.0);
    let mut half = 8.0;
    while half > 1e-9 {
        let mut best = (f64::NEG_INFINITY, c0, c1);
        for i in -10..=10 {
            for j in -10..=10 {
                let b0 = c0 + half * i as f64 / 10.0;
                let b1 = c1 + half * j as f64 / 10.0;
                let ll = log_likelihood(x, s, b0, b1);
                if ll > best.0 {
                    best = (ll, b0, b1);
                }
            }
        }
        c0 = best.1;
        c1 = best.2;
        half /= 4.0;
    }
    (c0, c1)
}

/// Central difference of a scalar function along coordinate `j`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, at: &[f64], j: usize) -> f64 {
    let h = 1e-6 * at[j].abs().max(1.0);
    let mut plus = at.to_vec();
    let mut minus = at.to_vec();
    plus[j] += h;
    minus[j] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}
