//! Save both estimators to self-describing model files and reload them;
//! reloading reproduces log-densities bit for bit.
//!
//! ```bash
//! cargo run -p scenrisk --example model_io
//! ```

use scenrisk::flow::{train_flow, TrainConfig};
use scenrisk::io::{
    generate_synthetic, load_model, save_model, SavedModel, SyntheticGeneratorSpec,
};
use scenrisk::kde::{default_bandwidth_grid, fit_kde};

fn main() {
    let spec = SyntheticGeneratorSpec {
        seed: 8,
        normalization_samples: 500_000,
        ..SyntheticGeneratorSpec::default()
    };
    let (data, _) = generate_synthetic(&spec, 500).unwrap();
    let dir = std::env::temp_dir();

    let kde = fit_kde(&data, &default_bandwidth_grid()).unwrap();
    let config = TrainConfig {
        max_iterations: 400,
        patience: 80,
        restarts: 2,
        seed: 3,
        ..TrainConfig::default()
    };
    let (flow, report) = train_flow(&data, &config).unwrap();
    println!(
        "fitted kde (h = {:.4}) and flow (validation mean log-likelihood {:.4})",
        kde.bandwidth(),
        report.validation_ll
    );

    for (name, model) in [
        ("kde_model.json", SavedModel::Kde(kde)),
        ("flow_model.json", SavedModel::Flow(flow)),
    ] {
        let path = dir.join(name);
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        let mut max_bits_diff = 0u64;
        for i in 0..data.n().min(100) {
            let a = model.as_density().log_density(data.row(i)).unwrap();
            let b = loaded.as_density().log_density(data.row(i)).unwrap();
            max_bits_diff = max_bits_diff.max(a.to_bits() ^ b.to_bits());
        }
        println!(
            "{name}: kind `{}`, {} bytes, reload reproduces log-densities {}",
            loaded.kind(),
            std::fs::metadata(&path).unwrap().len(),
            if max_bits_diff == 0 {
                "bit for bit"
            } else {
                "WITH DIFFERENCES"
            }
        );
        assert_eq!(max_bits_diff, 0);
    }
}
