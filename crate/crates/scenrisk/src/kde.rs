//! Gaussian-kernel density estimation with leave-one-out cross-validated
//! bandwidth selection and exact mixture sampling.
//!
//! The density estimate is the average of standard d-variate Gaussian
//! kernels centered on the data points, scaled by a single scalar bandwidth:
//! `p(x) = 1/(N h^d) * sum_i K((x - x_i)/h)`. Evaluation goes through
//! log-sum-exp so distant query points do not underflow.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{adjust_log_density, standardize, Dataset, Standardization};
use crate::density::DensityModel;
use crate::error::{Error, Result};
use crate::math::{logsumexp, LN_2PI};

/// Gaussian KDE over a fixed point set with one scalar bandwidth.
///
/// `points` live in the space the bandwidth applies to (standardized space
/// when fitted through [`fit_kde`]); the optional standardization record
/// maps queries and samples between that space and original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeModel {
    points: Array2<f64>,
    bandwidth: f64,
    standardization: Option<Standardization>,
}

impl KdeModel {
    /// Builds a model directly from points and a bandwidth.
    pub fn with_bandwidth(
        points: Array2<f64>,
        bandwidth: f64,
        standardization: Option<Standardization>,
    ) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidGrid {
                reason: format!("bandwidth must be positive and finite, got {bandwidth}"),
            });
        }
        if let Some(st) = &standardization {
            if st.dim() != points.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: points.ncols(),
                    got: st.dim(),
                });
            }
        }
        Ok(Self {
            points,
            bandwidth,
            standardization,
        })
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    /// Log-density of the kernel mixture at a point in the same space as
    /// the retained points (no standardization correction applied).
    pub fn kernel_log_density(&self, x: ArrayView1<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let h2 = self.bandwidth * self.bandwidth;
        let exponents: Vec<f64> = self
            .points
            .rows()
            .into_iter()
            .map(|p| {
                let sq: f64 = p
                    .iter()
                    .zip(x.iter())
                    .map(|(pi, xi)| (pi - xi) * (pi - xi))
                    .sum();
                -0.5 * sq / h2
            })
            .collect();
        let d = self.dim() as f64;
        Ok(logsumexp(&exponents)
            - (self.n() as f64).ln()
            - d * self.bandwidth.ln()
            - 0.5 * d * LN_2PI)
    }
}

impl DensityModel for KdeModel {
    fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Log-density in original units (inverts the standardization if the
    /// model carries one).
    fn log_density(&self, x: ArrayView1<f64>) -> Result<f64> {
        match &self.standardization {
            Some(st) => {
                if x.len() != self.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim(),
                        got: x.len(),
                    });
                }
                let z = st.to_standardized(x);
                adjust_log_density(self.kernel_log_density(z.view())?, st)
            }
            None => self.kernel_log_density(x),
        }
    }

    /// Exact mixture sampling: uniform component choice plus h-scaled
    /// Gaussian noise, mapped back to original units.
    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((n, self.dim()));
        for i in 0..n {
            let k = rng.random_range(0..self.n());
            let z = Array1::from_shape_fn(self.dim(), |j| {
                let noise: f64 = StandardNormal.sample(&mut *rng);
                self.points[[k, j]] + self.bandwidth * noise
            });
            match &self.standardization {
                Some(st) => out.row_mut(i).assign(&st.to_original(z.view())),
                None => out.row_mut(i).assign(&z),
            }
        }
        out
    }

    fn fingerprint(&self) -> String {
        format!(
            "kde(n={}, d={}, h={:.6e})",
            self.n(),
            self.dim(),
            self.bandwidth
        )
    }
}

/// `n` log-spaced values between `lo` and `hi` inclusive.
pub fn log_spaced_grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    assert!(n >= 1 && lo > 0.0 && hi >= lo);
    if n == 1 {
        return vec![lo];
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Default candidate grid: 40 log-spaced bandwidths in [1e-2, 1e1], sized
/// for data with unit per-dimension scale (standardized space).
pub fn default_bandwidth_grid() -> Vec<f64> {
    log_spaced_grid(40, 1e-2, 1e1)
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid {
            reason: "candidate grid is empty".into(),
        });
    }
    if let Some(bad) = grid.iter().find(|h| !(**h > 0.0) || !h.is_finite()) {
        return Err(Error::InvalidGrid {
            reason: format!("candidate bandwidth {bad} is not positive and finite"),
        });
    }
    Ok(())
}

/// Leave-one-out cross-validation score of one bandwidth: the sum over all
/// points of the log-density of the point under the estimator built from
/// the other N-1 points with the same bandwidth.
pub fn loo_score(rows: &Array2<f64>, h: f64) -> f64 {
    let n = rows.nrows();
    let d = rows.ncols() as f64;
    let h2 = h * h;
    let constant = -((n - 1) as f64).ln() - d * h.ln() - 0.5 * d * LN_2PI;
    let per_point: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = rows.row(i);
            let exponents: Vec<f64> = (0..n)
                .filter(|j| *j != i)
                .map(|j| {
                    let sq: f64 = rows
                        .row(j)
                        .iter()
                        .zip(xi.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    -0.5 * sq / h2
                })
                .collect();
            logsumexp(&exponents) + constant
        })
        .collect();
    per_point.iter().sum()
}

/// Selects the grid bandwidth maximizing the leave-one-out log-likelihood.
/// Ties break toward the smaller bandwidth.
pub fn loo_cv_bandwidth(data: &Dataset, candidate_grid: &[f64]) -> Result<f64> {
    if data.n() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: data.n(),
        });
    }
    validate_grid(candidate_grid)?;
    let mut sorted = candidate_grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut best: Option<(f64, f64)> = None;
    for &h in &sorted {
        let score = loo_score(data.rows(), h);
        if score == f64::NEG_INFINITY {
            continue;
        }
        match best {
            Some((_, s)) if score <= s => {}
            _ => best = Some((h, score)),
        }
    }
    best.map(|(h, _)| h).ok_or(Error::DegenerateBandwidth)
}

/// Fits a KDE: standardizes the data (unless it already carries a record),
/// selects the bandwidth by leave-one-out cross-validation over the grid,
/// and retains all points. Fully deterministic.
pub fn fit_kde(data: &Dataset, candidate_grid: &[f64]) -> Result<KdeModel> {
    let standardized = if data.standardization().is_some() {
        data.clone()
    } else {
        standardize(data)?
    };
    let h = loo_cv_bandwidth(&standardized, candidate_grid)?;
    KdeModel::with_bandwidth(
        standardized.rows().clone(),
        h,
        standardized.standardization().cloned(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(points: Array2<f64>, h: f64) -> KdeModel {
        KdeModel::with_bandwidth(points, h, None).unwrap()
    }

    #[test]
    fn single_point_at_center() {
        let m = model(array![[0.0]], 1.0);
        let lp = m.kernel_log_density(array![0.0].view()).unwrap();
        assert!((lp - (-0.9189385332046727)).abs() < 1e-7);
    }

    #[test]
    fn bandwidth_scales_density() {
        let m = model(array![[0.0]], 2.0);
        let lp = m.kernel_log_density(array![0.0].view()).unwrap();
        let expected = -(2.0f64).ln() - 0.5 * LN_2PI;
        assert!((lp - expected).abs() < 1e-12);
    }

    #[test]
    fn two_point_mixture_midpoint() {
        let m = model(array![[-1.0], [1.0]], 1.0);
        let lp = m.kernel_log_density(array![0.0].view()).unwrap();
        // mean of two N(+-1, 1) densities at 0 = exp(-1/2)/sqrt(2 pi)
        assert!((lp - (-1.4189385332046727)).abs() < 1e-7);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = model(array![[0.0, 0.0]], 1.0);
        assert!(matches!(
            m.kernel_log_density(array![0.0].view()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    /// Naive direct summation of the kernel average, the independent oracle.
    fn naive_log_density(points: &Array2<f64>, h: f64, x: ArrayView1<f64>) -> f64 {
        let n = points.nrows() as f64;
        let d = points.ncols() as f64;
        let sum: f64 = points
            .rows()
            .into_iter()
            .map(|p| {
                let sq: f64 = p
                    .iter()
                    .zip(x.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (-0.5 * sq / (h * h)).exp() / (2.0 * std::f64::consts::PI).powf(d / 2.0)
            })
            .sum();
        (sum / (n * h.powf(d))).ln()
    }

    proptest! {
        #[test]
        fn matches_naive_summation(seed in 0u64..500, n in 2usize..20, d in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let points = Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 4.0 - 2.0);
            let h = 0.3 + rng.random::<f64>();
            let x = Array1::from_shape_fn(d, |_| rng.random::<f64>() * 4.0 - 2.0);
            let m = model(points.clone(), h);
            let got = m.kernel_log_density(x.view()).unwrap();
            let want = naive_log_density(&points, h, x.view());
            prop_assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn tail_density_grows_with_bandwidth() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let points = Array2::from_shape_fn((20, 2), |_| rng.random::<f64>());
        let far = array![50.0, -40.0];
        let lo = model(points.clone(), 0.5)
            .kernel_log_density(far.view())
            .unwrap();
        let hi = model(points, 1.5).kernel_log_density(far.view()).unwrap();
        assert!(hi > lo);
    }

    #[test]
    fn loo_picks_oracle_argmax_cluster_with_outlier() {
        // duplicated cluster plus a far outlier
        let rows = array![[0.0], [0.0], [0.0], [0.01], [10.0]];
        let data = Dataset::new(rows.clone()).unwrap();
        let grid = [0.1, 1.0];
        let picked = loo_cv_bandwidth(&data, &grid).unwrap();
        // exhaustive-recompute oracle
        let oracle = brute_force_loo_argmax(&rows, &grid);
        assert_eq!(picked, oracle);
    }

    /// Independent O(N^2) LOO scorer used as oracle in tests.
    fn brute_force_loo_argmax(rows: &Array2<f64>, grid: &[f64]) -> f64 {
        let mut best = (f64::NAN, f64::NEG_INFINITY);
        let mut sorted = grid.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for &h in &sorted {
            let mut score = 0.0;
            for i in 0..rows.nrows() {
                let mut others = Vec::new();
                for j in 0..rows.nrows() {
                    if j != i {
                        others.push(rows.row(j).to_owned());
                    }
                }
                let pts =
                    Array2::from_shape_fn((others.len(), rows.ncols()), |(r, c)| others[r][c]);
                score += naive_log_density(&pts, h, rows.row(i));
            }
            if score > best.1 {
                best = (h, score);
            }
        }
        best.0
    }

    #[test]
    fn loo_matches_oracle_on_gaussian_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows: Array2<f64> = Array2::from_shape_fn((200, 1), |_| StandardNormal.sample(&mut rng));
        let data = Dataset::new(rows.clone()).unwrap();
        let grid = log_spaced_grid(15, 0.05, 2.0);
        let picked = loo_cv_bandwidth(&data, &grid).unwrap();
        let oracle = brute_force_loo_argmax(&rows, &grid);
        assert!((picked - oracle).abs() < 1e-12);
    }

    #[test]
    fn singleton_grid_returns_its_element() {
        let data = Dataset::new(array![[0.0], [1.0], [2.0]]).unwrap();
        assert_eq!(loo_cv_bandwidth(&data, &[0.5]).unwrap(), 0.5);
    }

    #[test]
    fn degenerate_grid_errors() {
        // h so small that h^2 underflows: every exponent is -inf
        let data = Dataset::new(array![[0.0], [1.0], [2.0]]).unwrap();
        assert!(matches!(
            loo_cv_bandwidth(&data, &[1e-200]),
            Err(Error::DegenerateBandwidth)
        ));
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = Array2::from_shape_fn((40, 3), |_| rng.random::<f64>() * 2.0);
        let data = Dataset::new(rows).unwrap();
        let grid = default_bandwidth_grid();
        let a = fit_kde(&data, &grid).unwrap();
        let b = fit_kde(&data, &grid).unwrap();
        assert_eq!(a.bandwidth(), b.bandwidth());
        assert_eq!(a, b);
    }

    #[test]
    fn fit_retains_all_points_and_smallest_legal_input() {
        let data = Dataset::new(array![[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]]).unwrap();
        let m = fit_kde(&data, &[0.5, 1.0]).unwrap();
        assert_eq!(m.n(), 3);
        assert!(m.standardization().is_some());
    }

    #[test]
    fn tiny_bandwidth_sampling_recovers_data_points() {
        let rows = array![[3.0, 7.0], [5.0, -1.0]];
        let data = Dataset::new(rows.clone()).unwrap();
        let std = standardize(&data).unwrap();
        let m = KdeModel::with_bandwidth(
            std.rows().clone(),
            1e-12,
            std.standardization().cloned(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = m.sample(&mut rng, 50);
        for r in s.rows() {
            let close_to_some_point = rows
                .rows()
                .into_iter()
                .any(|p| p.iter().zip(r.iter()).all(|(a, b)| (a - b).abs() < 1e-9));
            assert!(close_to_some_point);
        }
    }

    #[test]
    fn single_point_sample_mean_is_clt_consistent() {
        let m = model(array![[2.0]], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 100_000;
        let s = m.sample(&mut rng, n);
        let mean = s.column(0).mean().unwrap();
        assert!((mean - 2.0).abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn sampling_is_deterministic_under_seed() {
        let m = model(array![[0.0], [5.0]], 0.7);
        let a = m.sample(&mut ChaCha8Rng::seed_from_u64(9), 20);
        let b = m.sample(&mut ChaCha8Rng::seed_from_u64(9), 20);
        assert_eq!(a, b);
    }

    #[test]
    fn log_density_in_original_units() {
        // one-point KDE with scale-2 standardization is N(mu, (2h)^2)
        let st = Standardization {
            mean: array![10.0],
            scale: array![2.0],
        };
        let m = KdeModel::with_bandwidth(array![[0.0]], 1.0, Some(st)).unwrap();
        let lp = m.log_density(array![10.0].view()).unwrap();
        let expected = -0.5 * LN_2PI - 2.0f64.ln();
        assert!((lp - expected).abs() < 1e-12);
    }
}
