//! Evaluation metrics side by side: held-out mean log-likelihood, its
//! Pareto-front restriction, median/IQR aggregation, and the Mann-Whitney
//! U test between two estimators' score samples.
//!
//! ```bash
//! cargo run -p scenrisk --example density_metrics
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scenrisk::dataset::split_fit_test;
use scenrisk::flow::{train_flow_with_split, TrainConfig};
use scenrisk::io::{generate_synthetic, SyntheticGeneratorSpec};
use scenrisk::kde::{default_bandwidth_grid, fit_kde};
use scenrisk::stats::{mann_whitney_u, mean_log_likelihood, median_iqr, pareto_front_indices};

fn main() {
    let spec = SyntheticGeneratorSpec {
        seed: 6,
        normalization_samples: 500_000,
        ..SyntheticGeneratorSpec::default()
    };
    let (data, _) = generate_synthetic(&spec, 900).unwrap();

    let mut kde_scores = Vec::new();
    let mut nf_scores = Vec::new();
    for rep in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + rep);
        let split = split_fit_test(&data, &mut rng).unwrap();
        let fit = data.select(&split.fit_indices);
        let test = data.select(&split.test_indices);

        let kde = fit_kde(&fit, &default_bandwidth_grid()).unwrap();
        let config = TrainConfig {
            max_iterations: 600,
            patience: 80,
            restarts: 2,
            seed: 500 + rep,
            ..TrainConfig::default()
        };
        let (nf, _) = train_flow_with_split(&data, &split, &config).unwrap();

        let kde_llh = mean_log_likelihood(&kde, &test).unwrap().value;
        let nf_llh = mean_log_likelihood(&nf, &test).unwrap().value;
        kde_scores.push(kde_llh);
        nf_scores.push(nf_llh);
        println!("rep {rep}: kde {kde_llh:+.4}, flow {nf_llh:+.4}");

        if rep == 0 {
            // scoring only the parameter-space extremes
            let front = pareto_front_indices(test.rows().view());
            let extremes = test.select(&front);
            let kde_front = mean_log_likelihood(&kde, &extremes).unwrap().value;
            let nf_front = mean_log_likelihood(&nf, &extremes).unwrap().value;
            println!(
                "  pareto front of the test split: {} of {} points, kde {kde_front:+.4}, flow {nf_front:+.4}",
                extremes.n(),
                test.n()
            );
        }
    }

    let (m, q25, q75) = median_iqr(&kde_scores).unwrap();
    println!("\nkde over repetitions: median {m:.4}, IQR [{q25:.4}, {q75:.4}]");
    let (m, q25, q75) = median_iqr(&nf_scores).unwrap();
    println!("flow over repetitions: median {m:.4}, IQR [{q25:.4}, {q75:.4}]");

    let (u, p) = mann_whitney_u(&nf_scores, &kde_scores).unwrap();
    println!("Mann-Whitney flow vs kde: U = {u}, two-sided p = {p:.4}");
}
