//! Cross-module property checks that need the integration-test helpers:
//! density normalization by quadrature, simulator time-step convergence,
//! and crude-vs-importance-sampling consistency.

mod common;

use common::{integrate_density_1d, integrate_density_2d, sample_box};
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenrisk::dataset::{Dataset, ScenarioParameters};
use scenrisk::density::GaussianMixture;
use scenrisk::kde::{default_bandwidth_grid, fit_kde, KdeModel};
use scenrisk::risk::importance_sampling_with;
use scenrisk::sim::{simulate_cutin, ScenarioConfig, TwoStageTtcDriver};

#[test]
fn kde_density_integrates_to_one_in_1d_and_2d() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);

    // raw 1-d model, no standardization
    let points = Array2::from_shape_fn((40, 1), |_| rng.random::<f64>() * 3.0 - 1.5);
    let model = KdeModel::with_bandwidth(points, 0.4, None).unwrap();
    let (lo, hi) = sample_box(&model, &mut rng, 20_000);
    let integral = integrate_density_1d(&model, lo[0], hi[0], 4000);
    assert!((integral - 1.0).abs() < 0.01, "1-d integral {integral}");

    // fitted 2-d model, standardized internally, original-unit densities
    let rows = Array2::from_shape_fn((120, 2), |(_, j)| {
        let scale = if j == 0 { 5.0 } else { 0.5 };
        rng.random::<f64>() * scale + 2.0
    });
    let fitted = fit_kde(&Dataset::new(rows).unwrap(), &default_bandwidth_grid()).unwrap();
    let (lo, hi) = sample_box(&fitted, &mut rng, 20_000);
    let integral = integrate_density_2d(&fitted, [lo[0], lo[1]], [hi[0], hi[1]], 700);
    assert!((integral - 1.0).abs() < 0.01, "2-d integral {integral}");
}

#[test]
fn gaussian_mixture_integrates_to_one() {
    let g = GaussianMixture::new(
        vec![0.3, 0.7],
        vec![array![-1.0, 0.5], array![2.0, -0.5]],
        vec![
            array![[0.8, 0.3], [0.3, 0.9]],
            array![[1.2, -0.4], [-0.4, 0.7]],
        ],
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (lo, hi) = sample_box(&g, &mut rng, 20_000);
    let integral = integrate_density_2d(&g, [lo[0], lo[1]], [hi[0], hi[1]], 700);
    assert!((integral - 1.0).abs() < 0.01, "integral {integral}");
}

#[test]
fn halving_the_time_step_barely_moves_min_ttc() {
    let coarse = ScenarioConfig::default();
    let fine = ScenarioConfig {
        time_step: coarse.time_step / 2.0,
        ..coarse.clone()
    };
    let driver = TwoStageTtcDriver::default();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut compared = 0;
    for _ in 0..100 {
        let params = ScenarioParameters::new(
            20.0 + rng.random::<f64>() * 15.0,
            15.0 + rng.random::<f64>() * 15.0,
            0.4 + rng.random::<f64>() * 1.2,
            5.0 + rng.random::<f64>() * 50.0,
        )
        .unwrap();
        let a = simulate_cutin(&params, &driver, &coarse).unwrap();
        let b = simulate_cutin(&params, &driver, &fine).unwrap();
        // outcomes that flip across the collision boundary are excluded
        if a.collision != b.collision {
            continue;
        }
        if a.min_ttc.is_finite() && b.min_ttc.is_finite() && a.min_ttc > 0.0 {
            let rel = (a.min_ttc - b.min_ttc).abs() / a.min_ttc.max(b.min_ttc);
            assert!(
                rel < 0.05,
                "min_ttc moved {rel:.3} for {params:?}: {} vs {}",
                a.min_ttc,
                b.min_ttc
            );
            compared += 1;
        }
    }
    assert!(compared > 50, "too few comparable scenarios: {compared}");
}

#[test]
fn importance_sampling_with_q_equal_p_matches_crude_expectation() {
    // with q = p the weights are exactly 1 and the estimator reduces to
    // crude Monte Carlo of the indicator; check against the closed form
    let p = GaussianMixture::single(array![0.0], array![[1.0]]).unwrap();
    let truth = {
        use statrs::distribution::{ContinuousCDF, Normal};
        1.0 - Normal::new(0.0, 1.0).unwrap().cdf(1.0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let est = importance_sampling_with(
        &p,
        &p,
        |x| Ok(if x[0] > 1.0 { 1.0 } else { 0.0 }),
        20_000,
        &mut rng,
    )
    .unwrap();
    assert!(
        (est.probability - truth).abs() < 3.0 * est.standard_error,
        "estimate {} vs truth {truth} (3 SE = {})",
        est.probability,
        3.0 * est.standard_error
    );
    // unit weights: the SE reduces to the Bernoulli standard error
    let bernoulli_se = (est.probability * (1.0 - est.probability) / 20_000f64).sqrt();
    assert!((est.standard_error - bernoulli_se).abs() / bernoulli_se < 0.01);
}
