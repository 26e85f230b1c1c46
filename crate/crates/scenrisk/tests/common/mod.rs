//! Shared helpers for the integration suites: box quadrature against the
//! density-model contract and a small dense determinant.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::RngCore;
use scenrisk::DensityModel;

/// Midpoint quadrature of exp(log_density) over [lo, hi].
pub fn integrate_density_1d(model: &dyn DensityModel, lo: f64, hi: f64, steps: usize) -> f64 {
    let h = (hi - lo) / steps as f64;
    let points = Array2::from_shape_fn((steps, 1), |(i, _)| lo + (i as f64 + 0.5) * h);
    let mut total = 0.0;
    for row in points.rows() {
        total += model.log_density(row).unwrap().exp();
    }
    total * h
}

/// Midpoint quadrature of exp(log_density) over a 2-d box.
pub fn integrate_density_2d(
    model: &dyn DensityModel,
    lo: [f64; 2],
    hi: [f64; 2],
    steps: usize,
) -> f64 {
    let hx = (hi[0] - lo[0]) / steps as f64;
    let hy = (hi[1] - lo[1]) / steps as f64;
    let mut total = 0.0;
    let mut row = Array1::zeros(2);
    for i in 0..steps {
        let x = lo[0] + (i as f64 + 0.5) * hx;
        for j in 0..steps {
            let y = lo[1] + (j as f64 + 0.5) * hy;
            row[0] = x;
            row[1] = y;
            total += model.log_density(row.view()).unwrap().exp();
        }
    }
    total * hx * hy
}

/// Sample-informed integration box: the sample extent widened by half the
/// range on each side, which comfortably covers the sub-1e-4 tail mass of
/// the flows and kernel mixtures under test.
pub fn sample_box(model: &dyn DensityModel, rng: &mut dyn RngCore, n: usize) -> (Vec<f64>, Vec<f64>) {
    let s = model.sample(rng, n);
    let d = model.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for row in s.rows() {
        for j in 0..d {
            lo[j] = lo[j].min(row[j]);
            hi[j] = hi[j].max(row[j]);
        }
    }
    for j in 0..d {
        let range = (hi[j] - lo[j]).max(1.0);
        lo[j] -= 0.5 * range;
        hi[j] += 0.5 * range;
    }
    (lo, hi)
}

/// Determinant by Gaussian elimination with partial pivoting (d <= 8).
pub fn determinant(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    assert_eq!(n, m.ncols());
    let mut a = m.clone();
    let mut det = 1.0;
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if a[[r, col]].abs() > a[[pivot, col]].abs() {
                pivot = r;
            }
        }
        if a[[pivot, col]] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for c in 0..n {
                let tmp = a[[col, c]];
                a[[col, c]] = a[[pivot, c]];
                a[[pivot, c]] = tmp;
            }
            det = -det;
        }
        det *= a[[col, col]];
        for r in col + 1..n {
            let f = a[[r, col]] / a[[col, col]];
            for c in col..n {
                a[[r, c]] -= f * a[[col, c]];
            }
        }
    }
    det
}
