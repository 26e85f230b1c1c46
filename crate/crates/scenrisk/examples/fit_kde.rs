//! Fit the Gaussian KDE with leave-one-out bandwidth selection and score
//! it on held-out data.
//!
//! ```bash
//! cargo run -p scenrisk --example fit_kde
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scenrisk::dataset::split_fit_test;
use scenrisk::io::{generate_synthetic, SyntheticGeneratorSpec};
use scenrisk::kde::{default_bandwidth_grid, fit_kde};
use scenrisk::stats::mean_log_likelihood;
use scenrisk::DensityModel;

fn main() {
    let spec = SyntheticGeneratorSpec {
        seed: 1,
        normalization_samples: 500_000,
        ..SyntheticGeneratorSpec::default()
    };
    let (data, generator) = generate_synthetic(&spec, 1000).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let split = split_fit_test(&data, &mut rng).unwrap();
    let fit = data.select(&split.fit_indices);
    let test = data.select(&split.test_indices);
    println!("fitting on {} rows, testing on {}", fit.n(), test.n());

    let model = fit_kde(&fit, &default_bandwidth_grid()).unwrap();
    println!(
        "selected bandwidth {:.4} (standardized space), {} retained points",
        model.bandwidth(),
        model.n()
    );

    let held_out = mean_log_likelihood(&model, &test).unwrap();
    let truth = mean_log_likelihood(&generator, &test).unwrap();
    println!("held-out mean log-likelihood: {:.4}", held_out.value);
    println!("ground-truth mean log-likelihood: {:.4}", truth.value);

    // densities come back in original units
    let x = test.row(0);
    println!(
        "\nlog p(({:.2}, {:.2}, {:.2}, {:.2})) = {:.4}",
        x[0],
        x[1],
        x[2],
        x[3],
        model.log_density(x).unwrap()
    );

    // exact mixture sampling from the fitted model
    let samples = model.sample(&mut rng, 3);
    println!("three draws from the fitted density:");
    for row in samples.rows() {
        println!(
            "  ({:6.2}, {:6.2}, {:5.2}, {:6.2})",
            row[0], row[1], row[2], row[3]
        );
    }
}
