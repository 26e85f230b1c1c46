//! Draw a synthetic cut-in dataset from the built-in truncated Gaussian
//! mixture and query its exact log-density evaluator.
//!
//! ```bash
//! cargo run -p scenrisk --example synthetic_data
//! ```

use ndarray::Axis;
use scenrisk::io::{generate_synthetic, SyntheticGeneratorSpec};
use scenrisk::DensityModel;

fn main() {
    let spec = SyntheticGeneratorSpec {
        seed: 7,
        normalization_samples: 1_000_000,
        ..SyntheticGeneratorSpec::default()
    };
    let (data, generator) = generate_synthetic(&spec, 2916).unwrap();

    let (mass, se) = generator.orthant_mass();
    println!("drew {} scenarios (d = {})", data.n(), data.dim());
    println!("positive-orthant mass of the raw mixture: {mass:.6} +- {se:.2e}");

    let mean = data.rows().mean_axis(Axis(0)).unwrap();
    println!(
        "sample means: v_ego {:.2} m/s, v_other {:.2} m/s, v_lat {:.2} m/s, d_init {:.2} m",
        mean[0], mean[1], mean[2], mean[3]
    );

    println!("\nexact log-densities of the first five rows:");
    for i in 0..5 {
        let row = data.row(i);
        let lp = generator.log_density(row).unwrap();
        println!(
            "  ({:6.2}, {:6.2}, {:5.2}, {:6.2}) -> {lp:.4}",
            row[0], row[1], row[2], row[3]
        );
    }

    // the evaluator is the ground truth the estimators are scored against
    let outside = ndarray::array![-1.0, 20.0, 1.0, 30.0];
    println!(
        "\nlog-density outside the positive orthant: {}",
        generator.log_density(outside.view()).unwrap()
    );
}
