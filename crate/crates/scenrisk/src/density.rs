//! The density-model contract and an exact Gaussian-mixture density used as
//! ground truth by the synthetic generator and the estimator tests.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::math::{logsumexp, LN_2PI};

/// Anything that exposes an exact log-density and i.i.d. sampling over R^d.
///
/// `exp(log_density)` must be finite and nonnegative everywhere; samples are
/// returned in original (unstandardized) units, one row per draw.
pub trait DensityModel: Send + Sync {
    fn dim(&self) -> usize;

    /// Natural log of the density at `x`, in the same units as `sample`.
    fn log_density(&self, x: ArrayView1<f64>) -> Result<f64>;

    /// `n` i.i.d. draws, one per row.
    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Array2<f64>;

    /// Short human-readable identifier recorded in provenance output.
    fn fingerprint(&self) -> String;
}

/// A mixture of full-covariance Gaussians with exact log-density.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Array1<f64>>,
    /// Lower Cholesky factors of the component covariances.
    cholesky: Vec<Array2<f64>>,
    dim: usize,
}

impl GaussianMixture {
    /// Builds a mixture from weights, means, and covariance matrices.
    ///
    /// Weights must be positive and sum to 1 (up to 1e-9); covariances must
    /// be symmetric positive-definite.
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Array1<f64>>,
        covariances: Vec<Array2<f64>>,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != covariances.len()
        {
            return Err(Error::InvalidConfig(
                "mixture needs matching, nonempty weights/means/covariances".into(),
            ));
        }
        if weights.iter().any(|w| *w <= 0.0) {
            return Err(Error::InvalidConfig("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let dim = means[0].len();
        let mut cholesky = Vec::with_capacity(covariances.len());
        for (k, cov) in covariances.iter().enumerate() {
            if means[k].len() != dim || cov.nrows() != dim || cov.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: means[k].len().min(cov.nrows()),
                });
            }
            let sym_err = (0..dim)
                .flat_map(|i| (0..dim).map(move |j| (i, j)))
                .map(|(i, j)| (cov[[i, j]] - cov[[j, i]]).abs())
                .fold(0.0f64, f64::max);
            if sym_err > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "covariance {k} is not symmetric (max asymmetry {sym_err:.2e})"
                )));
            }
            let l = linalg::cholesky(cov).ok_or_else(|| {
                Error::InvalidConfig(format!("covariance {k} is not positive definite"))
            })?;
            cholesky.push(l);
        }
        Ok(Self {
            weights,
            means,
            cholesky,
            dim,
        })
    }

    /// Single standard Gaussian N(mean, cov).
    pub fn single(mean: Array1<f64>, covariance: Array2<f64>) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![covariance])
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    fn component_log_density(&self, k: usize, x: ArrayView1<f64>) -> f64 {
        let l = &self.cholesky[k];
        let diff = &x.to_owned() - &self.means[k];
        let y = linalg::forward_solve(l, &diff);
        let maha = y.dot(&y);
        let log_det: f64 = (0..self.dim).map(|i| l[[i, i]].ln()).sum();
        -0.5 * maha - log_det - 0.5 * self.dim as f64 * LN_2PI
    }

    fn sample_one(&self, rng: &mut dyn RngCore) -> Array1<f64> {
        let k = self.pick_component(rng);
        let l = &self.cholesky[k];
        let z = Array1::from_shape_fn(self.dim, |_| StandardNormal.sample(&mut *rng));
        &self.means[k] + &l.dot(&z)
    }

    fn pick_component(&self, rng: &mut dyn RngCore) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        self.weights.len() - 1
    }
}

impl DensityModel for GaussianMixture {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: ArrayView1<f64>) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let terms: Vec<f64> = (0..self.weights.len())
            .map(|k| self.weights[k].ln() + self.component_log_density(k, x))
            .collect();
        Ok(logsumexp(&terms))
    }

    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((n, self.dim));
        for i in 0..n {
            out.row_mut(i).assign(&self.sample_one(rng));
        }
        out
    }

    fn fingerprint(&self) -> String {
        format!("gaussian-mixture(k={}, d={})", self.weights.len(), self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standard_normal_log_density() {
        let g = GaussianMixture::single(array![0.0], array![[1.0]]).unwrap();
        let lp = g.log_density(array![0.0].view()).unwrap();
        assert!((lp + 0.5 * LN_2PI).abs() < 1e-12);
    }

    #[test]
    fn correlated_gaussian_matches_closed_form() {
        let cov = array![[2.0, 0.6], [0.6, 1.0]];
        let g = GaussianMixture::single(array![1.0, -1.0], cov.clone()).unwrap();
        let x = array![0.3, 0.4];
        // closed form via explicit 2x2 inverse
        let det = cov[[0, 0]] * cov[[1, 1]] - cov[[0, 1]] * cov[[1, 0]];
        let diff = [x[0] - 1.0, x[1] + 1.0];
        let maha = (cov[[1, 1]] * diff[0] * diff[0] - 2.0 * cov[[0, 1]] * diff[0] * diff[1]
            + cov[[0, 0]] * diff[1] * diff[1])
            / det;
        let expected = -0.5 * maha - 0.5 * det.ln() - LN_2PI;
        assert!((g.log_density(x.view()).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn mixture_density_is_weighted_sum() {
        let g = GaussianMixture::new(
            vec![0.25, 0.75],
            vec![array![-1.0], array![2.0]],
            vec![array![[1.0]], array![[4.0]]],
        )
        .unwrap();
        let x = array![0.5];
        let c0 = (-0.5 * (0.5f64 + 1.0).powi(2)).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let c1 = (-0.5 * ((0.5f64 - 2.0) / 2.0).powi(2)).exp()
            / (2.0 * (2.0 * std::f64::consts::PI).sqrt());
        let expected = (0.25 * c0 + 0.75 * c1).ln();
        assert!((g.log_density(x.view()).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn sample_moments_match_component() {
        let g = GaussianMixture::single(array![3.0, -2.0], array![[0.25, 0.0], [0.0, 1.0]])
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let s = g.sample(&mut rng, 20_000);
        let mean = s.mean_axis(ndarray::Axis(0)).unwrap();
        assert!((mean[0] - 3.0).abs() < 3.0 * 0.5 / (20_000f64).sqrt() * 3.0);
        assert!((mean[1] + 2.0).abs() < 3.0 / (20_000f64).sqrt() * 3.0);
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(GaussianMixture::new(
            vec![0.5, 0.6],
            vec![array![0.0], array![0.0]],
            vec![array![[1.0]], array![[1.0]]],
        )
        .is_err());
    }
}
