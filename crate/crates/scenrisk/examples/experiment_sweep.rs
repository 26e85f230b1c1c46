//! A reduced experiment sweep: two data fractions, a few repetitions,
//! both estimators, with results and summary written as delimited text.
//!
//! ```bash
//! cargo run -p scenrisk --example experiment_sweep
//! ```

use scenrisk::flow::TrainConfig;
use scenrisk::io::{
    generate_synthetic, run_experiment, write_results_file, write_summary_file, EstimatorKind,
    ExperimentPlan, SyntheticGeneratorSpec,
};
use scenrisk::risk::RiskConfig;

fn main() {
    let spec = SyntheticGeneratorSpec {
        seed: 4,
        normalization_samples: 500_000,
        ..SyntheticGeneratorSpec::default()
    };
    let (data, _) = generate_synthetic(&spec, 1200).unwrap();

    let plan = ExperimentPlan {
        master_seed: 21,
        fractions: vec![0.3, 1.0],
        repetitions: 3,
        estimators: vec![EstimatorKind::Kde, EstimatorKind::Nf],
        risk: RiskConfig {
            n_mc: 2000,
            n_nis: 2000,
            n_c: 60,
            seed: 0,
        },
        train: TrainConfig {
            max_iterations: 800,
            patience: 80,
            restarts: 2,
            ..TrainConfig::default()
        },
        ..ExperimentPlan::default()
    };

    println!(
        "sweep: fractions {:?} x {} repetitions x {:?}",
        plan.fractions, plan.repetitions, plan.estimators
    );
    let start = std::time::Instant::now();
    let out = run_experiment(&plan, &data).unwrap();
    println!("{} rows in {:.1}s\n", out.rows.len(), start.elapsed().as_secs_f64());

    for r in &out.rows {
        println!(
            "  fraction {:.1} rep {} {}: mean llh {:+.4}, pareto {:+.4}, is {:.3e}",
            r.fraction, r.repetition, r.estimator, r.mean_llh, r.mean_llh_pareto, r.is_p
        );
    }

    println!("\naggregates (median [q25, q75]):");
    for s in &out.summary {
        match (s.median, s.u) {
            (Some(m), _) => println!(
                "  fraction {:.1} {} {}: {:.4} [{:.4}, {:.4}]",
                s.fraction,
                s.estimator,
                s.metric,
                m,
                s.q25.unwrap(),
                s.q75.unwrap()
            ),
            (None, Some(u)) => println!(
                "  fraction {:.1} {} {}: U = {:.1}, p = {:.4}",
                s.fraction,
                s.estimator,
                s.metric,
                u,
                s.p.unwrap()
            ),
            _ => {}
        }
    }

    let dir = std::env::temp_dir();
    let results = dir.join("sweep_results.csv");
    let summary = dir.join("sweep_summary.csv");
    write_results_file(&out.rows, &results).unwrap();
    write_summary_file(&out.summary, &summary).unwrap();
    println!(
        "\nwrote {} and {}",
        results.display(),
        summary.display()
    );
}
