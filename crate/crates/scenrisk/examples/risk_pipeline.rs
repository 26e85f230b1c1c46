//! Run the full risk-quantification pipeline once: crude Monte Carlo over
//! a fitted exposure density, selection of the most critical scenarios,
//! a KDE importance density, and the weighted importance-sampling estimate.
//!
//! ```bash
//! cargo run -p scenrisk --example risk_pipeline
//! ```

use scenrisk::io::{generate_synthetic, SyntheticGeneratorSpec};
use scenrisk::kde::{default_bandwidth_grid, fit_kde};
use scenrisk::risk::{run_pipeline, RiskConfig};
use scenrisk::sim::{ScenarioConfig, TwoStageTtcDriver};

fn main() {
    let spec = SyntheticGeneratorSpec {
        seed: 3,
        normalization_samples: 500_000,
        ..SyntheticGeneratorSpec::default()
    };
    let (data, _) = generate_synthetic(&spec, 2916).unwrap();

    // exposure density fitted on the observed scenarios
    let grid = default_bandwidth_grid();
    let exposure = fit_kde(&data, &grid).unwrap();
    println!(
        "exposure: KDE over {} scenarios, bandwidth {:.4}",
        exposure.n(),
        exposure.bandwidth()
    );

    let risk_config = RiskConfig {
        n_mc: 10_000,
        n_nis: 10_000,
        n_c: 100,
        seed: 17,
    };
    let driver = TwoStageTtcDriver::default();
    let sim_config = ScenarioConfig::default();

    let start = std::time::Instant::now();
    let run = run_pipeline(&exposure, &driver, &sim_config, &risk_config, &grid).unwrap();
    println!("pipeline took {:.1}s", start.elapsed().as_secs_f64());

    println!(
        "\ncrude Monte Carlo: {} collisions in {} runs -> {:.3e}",
        (run.monte_carlo.crude_estimate * risk_config.n_mc as f64).round() as usize,
        risk_config.n_mc,
        run.monte_carlo.crude_estimate
    );
    println!(
        "importance density: KDE over the {} most critical scenarios, bandwidth {:.4}",
        run.critical.n(),
        run.importance.bandwidth()
    );
    println!(
        "importance sampling: {:.3e} (standard error {:.1e})",
        run.estimate.probability, run.estimate.standard_error
    );
    println!(
        "weights: max {:.2e}, mean at collisions {:.2e}; non-physical importance draws: {}",
        run.estimate.weights.max, run.estimate.weights.mean_at_collisions, run.estimate.nonphysical
    );

    // the audit record carries everything needed to reproduce the run
    let audit = run.audit(&risk_config);
    println!("\naudit record:\n{}", serde_json::to_string_pretty(&audit).unwrap());
}
