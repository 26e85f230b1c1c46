//! Simulate cut-in scenarios with the two-stage braking driver and write
//! one full state trace.
//!
//! ```bash
//! cargo run -p scenrisk --example simulate_cutin
//! ```

use scenrisk::dataset::ScenarioParameters;
use scenrisk::sim::{
    simulate_cutin, simulate_cutin_traced, write_trace, PassiveDriver, ScenarioConfig,
    TwoStageTtcDriver,
};

fn main() {
    let config = ScenarioConfig::default();
    let driver = TwoStageTtcDriver::default();

    let scenarios = [
        ("benign, other pulls away", [25.0, 32.0, 1.0, 40.0]),
        ("closing, comfortable gap", [30.0, 22.0, 1.0, 45.0]),
        ("closing, short gap", [32.0, 21.0, 1.2, 18.0]),
        ("aggressive cut-in", [33.0, 19.0, 1.5, 8.0]),
    ];

    println!("two-stage driver (gentle at TTC {} s, hard at {} s):", driver.gentle_ttc_threshold, driver.hard_ttc_threshold);
    for (label, [v_ego, v_other, v_lat, d_init]) in scenarios {
        let params = ScenarioParameters::new(v_ego, v_other, v_lat, d_init).unwrap();
        let outcome = simulate_cutin(&params, &driver, &config).unwrap();
        let passive = simulate_cutin(&params, &PassiveDriver, &config).unwrap();
        println!(
            "  {label:26} -> collision {} (min TTC {:.2} s); passive driver would {}",
            if outcome.collision { "yes" } else { "no " },
            outcome.min_ttc,
            if passive.collision { "crash" } else { "survive" }
        );
    }

    // record a full trace of the short-gap case
    let params = ScenarioParameters::new(32.0, 21.0, 1.2, 18.0).unwrap();
    let outcome = simulate_cutin_traced(&params, &driver, &config).unwrap();
    let trace = outcome.trace.as_ref().unwrap();
    let path = std::env::temp_dir().join("cutin_trace.csv");
    write_trace(trace, std::fs::File::create(&path).unwrap()).unwrap();
    println!(
        "\nwrote {} trace rows to {} (columns: time, ego_pos, ego_vel, ego_acc, other_pos, other_vel, other_lat, ttc)",
        trace.len(),
        path.display()
    );
}
