//! Command-line interface: data generation, estimator fitting, evaluation,
//! single-scenario simulation, risk runs, and the full experiment sweep.
//!
//! Exit codes: 0 on success, 1 for validation problems (bad flags, bad
//! files, bad configuration), 2 for runtime faults.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::dataset::{Dataset, ScenarioParameters};
use crate::error::{Error, Result};
use crate::flow::{train_flow, TrainConfig};
use crate::io::{
    generate_synthetic, load_model, load_scenarios, run_experiment, save_model, save_scenarios,
    write_results_file, write_summary_file, EstimatorKind, ExperimentPlan, GridSpec, SavedModel,
    SyntheticGeneratorSpec,
};
use crate::kde::fit_kde;
use crate::risk::{run_pipeline, RiskConfig};
use crate::sim::{
    simulate_cutin, simulate_cutin_traced, write_trace, ScenarioConfig, TwoStageTtcDriver,
};
use crate::stats::{mean_log_likelihood, pareto_front_indices};

#[derive(Parser)]
#[command(
    name = "scenrisk",
    version,
    about = "Scenario-parameter density estimation and cut-in collision risk quantification"
)]
struct Cli {
    /// Worker threads for simulation batches and repetitions (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario-parameter dataset.
    GenData(GenDataArgs),
    /// Fit a density estimator and save the model file.
    Fit(FitArgs),
    /// Evaluate a saved model on a scenario file (mean log-likelihood).
    Eval(EvalArgs),
    /// Simulate a single cut-in scenario.
    Simulate(SimulateArgs),
    /// Fit an exposure density and run the full risk pipeline once.
    Risk(RiskArgs),
    /// Run the repeated experiment sweep over data fractions.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Number of scenarios to draw.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output scenario file (csv).
    #[arg(long)]
    out: PathBuf,
    /// Optional generator spec (toml); the built-in cut-in mixture otherwise.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TrainFlags {
    #[arg(long, default_value_t = 5000)]
    max_iterations: usize,
    #[arg(long, default_value_t = 100)]
    patience: usize,
    #[arg(long, default_value_t = 4)]
    restarts: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.2)]
    dropout: f64,
    #[arg(long, default_value_t = 4)]
    layers: usize,
}

impl TrainFlags {
    fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            max_iterations: self.max_iterations,
            patience: self.patience,
            restarts: self.restarts,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            dropout_rate: self.dropout,
            n_layers: self.layers,
            seed,
        }
    }
}

#[derive(Args, Clone)]
struct GridFlags {
    /// Bandwidth grid size.
    #[arg(long, default_value_t = 40)]
    grid_points: usize,
    /// Smallest candidate bandwidth (standardized space).
    #[arg(long, default_value_t = 1e-2)]
    grid_lo: f64,
    /// Largest candidate bandwidth (standardized space).
    #[arg(long, default_value_t = 1e1)]
    grid_hi: f64,
}

impl GridFlags {
    fn to_spec(&self) -> GridSpec {
        GridSpec {
            points: self.grid_points,
            lo: self.grid_lo,
            hi: self.grid_hi,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Input scenario file.
    #[arg(long)]
    data: PathBuf,
    /// Which estimator to fit.
    #[arg(long, value_parser = parse_estimator)]
    estimator: EstimatorKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output model file (json).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    grid: GridFlags,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct EvalArgs {
    /// Saved model file.
    #[arg(long)]
    model: PathBuf,
    /// Scenario file with evaluation points.
    #[arg(long)]
    data: PathBuf,
    /// Restrict to the Pareto front of the evaluation points.
    #[arg(long, default_value_t = false)]
    pareto: bool,
    /// Optional per-point log-density output (csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    v_ego: f64,
    #[arg(long)]
    v_other: f64,
    #[arg(long)]
    v_lat: f64,
    #[arg(long)]
    d_init: f64,
    #[command(flatten)]
    driver: DriverFlags,
    #[command(flatten)]
    sim: SimFlags,
    /// Write the full state trace (csv).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Machine-readable outcome output (json).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct DriverFlags {
    #[arg(long, default_value_t = 4.0)]
    gentle_ttc: f64,
    #[arg(long, default_value_t = 2.0)]
    hard_ttc: f64,
    #[arg(long, default_value_t = 2.0)]
    gentle_decel: f64,
    #[arg(long, default_value_t = 6.0)]
    hard_decel: f64,
}

impl DriverFlags {
    fn to_driver(&self) -> Result<TwoStageTtcDriver> {
        let d = TwoStageTtcDriver {
            gentle_ttc_threshold: self.gentle_ttc,
            hard_ttc_threshold: self.hard_ttc,
            gentle_decel: self.gentle_decel,
            hard_decel: self.hard_decel,
            ..TwoStageTtcDriver::default()
        };
        d.validate()?;
        Ok(d)
    }
}

#[derive(Args, Clone)]
struct SimFlags {
    #[arg(long, default_value_t = 0.01)]
    time_step: f64,
    #[arg(long, default_value_t = 15.0)]
    horizon: f64,
}

impl SimFlags {
    fn to_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            time_step: self.time_step,
            horizon: self.horizon,
            ..ScenarioConfig::default()
        }
    }
}

#[derive(Args)]
struct RiskArgs {
    /// Scenario file the exposure density is fitted on.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_estimator)]
    estimator: EstimatorKind,
    #[arg(long, default_value_t = 10_000)]
    nmc: usize,
    #[arg(long, default_value_t = 10_000)]
    nnis: usize,
    #[arg(long, default_value_t = 100)]
    nc: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Audit record output (json).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    driver: DriverFlags,
    #[command(flatten)]
    sim: SimFlags,
    #[command(flatten)]
    grid: GridFlags,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Scenario file the sweep draws from.
    #[arg(long)]
    data: PathBuf,
    /// Experiment plan (toml); flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated data fractions, e.g. 0.1,0.5,1.0.
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    /// Comma-separated estimators, e.g. kde,nf.
    #[arg(long, value_delimiter = ',', value_parser = parse_estimator)]
    estimators: Option<Vec<EstimatorKind>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (defaults to $SCENRISK_OUT_DIR, then `.`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn parse_estimator(s: &str) -> std::result::Result<EstimatorKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses arguments and runs one subcommand; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are successful exits; anything else is a usage error
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::try_init();
    if cli.jobs > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenData(args) => gen_data(args),
        Command::Fit(args) => fit(args),
        Command::Eval(args) => eval(args),
        Command::Simulate(args) => simulate(args),
        Command::Risk(args) => risk(args),
        Command::Experiment(args) => experiment(args),
    }
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(path) => toml::from_str(&std::fs::read_to_string(path)?)?,
        None => SyntheticGeneratorSpec::default(),
    };
    spec.seed = args.seed;
    let (data, generator) = generate_synthetic(&spec, args.n)?;
    save_scenarios(&data, &args.out)?;
    let (mass, se) = generator.orthant_mass();
    println!(
        "wrote {} scenarios to {} (orthant mass {:.6} +- {:.2e})",
        data.n(),
        args.out.display(),
        mass,
        se
    );
    Ok(())
}

fn fit_model(
    data: &Dataset,
    estimator: EstimatorKind,
    seed: u64,
    grid: &GridSpec,
    train: &TrainFlags,
) -> Result<(SavedModel, String)> {
    match estimator {
        EstimatorKind::Kde => {
            let model = fit_kde(data, &grid.values())?;
            let note = format!("bandwidth {}", model.bandwidth());
            Ok((SavedModel::Kde(model), note))
        }
        EstimatorKind::Nf => {
            let (model, report) = train_flow(data, &train.to_config(seed))?;
            let note = format!(
                "validation mean log-likelihood {} (restart {})",
                report.validation_ll, report.selected_restart
            );
            Ok((SavedModel::Flow(model), note))
        }
    }
}

fn fit(args: FitArgs) -> Result<()> {
    let data = load_scenarios(&args.data)?;
    let (model, note) = fit_model(&data, args.estimator, args.seed, &args.grid.to_spec(), &args.train)?;
    save_model(&model, &args.out)?;
    println!(
        "fitted {} on {} rows: {}; model written to {}",
        model.kind(),
        data.n(),
        note,
        args.out.display()
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let saved = load_model(&args.model)?;
    let model = saved.as_density();
    let data = load_scenarios(&args.data)?;
    let eval_set = if args.pareto {
        let idx = pareto_front_indices(data.rows().view());
        data.select(&idx)
    } else {
        data
    };
    let m = mean_log_likelihood(model, &eval_set)?;
    if let Some(out) = &args.out {
        let mut w = csv::Writer::from_path(out)?;
        w.write_record(["index", "log_density"])?;
        for i in 0..eval_set.n() {
            let lp = model.log_density(eval_set.row(i))?;
            w.write_record([i.to_string(), lp.to_string()])?;
        }
        w.flush()?;
    }
    println!(
        "mean log-likelihood over {} points: {}{}",
        eval_set.n(),
        m.value,
        if m.neg_inf_indices.is_empty() {
            String::new()
        } else {
            format!(" ({} points at -inf)", m.neg_inf_indices.len())
        }
    );
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let params = ScenarioParameters::new(args.v_ego, args.v_other, args.v_lat, args.d_init)?;
    let driver = args.driver.to_driver()?;
    let config = args.sim.to_config();
    let outcome = if args.trace.is_some() {
        simulate_cutin_traced(&params, &driver, &config)?
    } else {
        simulate_cutin(&params, &driver, &config)?
    };
    if let (Some(path), Some(trace)) = (&args.trace, &outcome.trace) {
        write_trace(trace, std::fs::File::create(path)?)?;
    }
    if let Some(path) = &args.out {
        let record = serde_json::json!({
            "collision": outcome.collision,
            "min_ttc": if outcome.min_ttc.is_finite() { Some(outcome.min_ttc) } else { None },
        });
        std::fs::write(path, serde_json::to_string_pretty(&record)?)?;
    }
    println!(
        "collision: {}; min TTC: {}",
        if outcome.collision { 1 } else { 0 },
        outcome.min_ttc
    );
    Ok(())
}

fn risk(args: RiskArgs) -> Result<()> {
    let data = load_scenarios(&args.data)?;
    let grid_spec = args.grid.to_spec();
    let (saved, note) = fit_model(&data, args.estimator, args.seed, &grid_spec, &args.train)?;
    let driver = args.driver.to_driver()?;
    let sim_config = args.sim.to_config();
    let risk_config = RiskConfig {
        n_mc: args.nmc,
        n_nis: args.nnis,
        n_c: args.nc,
        seed: args.seed,
    };
    let run = run_pipeline(
        saved.as_density(),
        &driver,
        &sim_config,
        &risk_config,
        &grid_spec.values(),
    )?;
    let audit = run.audit(&risk_config);
    if let Some(path) = &args.out {
        std::fs::write(path, serde_json::to_string_pretty(&audit)?)?;
    }
    println!("exposure: {} ({note})", saved.kind());
    println!(
        "crude estimate: {} ({} collisions in {})",
        audit.crude_estimate,
        (audit.crude_estimate * audit.n_mc as f64).round() as usize,
        audit.n_mc
    );
    println!(
        "importance-sampling estimate: {} (standard error {})",
        audit.probability, audit.standard_error
    );
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let mut plan = match &args.config {
        Some(path) => ExperimentPlan::from_toml_str(&std::fs::read_to_string(path)?)?,
        None => ExperimentPlan::default(),
    };
    if let Some(reps) = args.reps {
        plan.repetitions = reps;
    }
    if let Some(fractions) = args.fractions {
        plan.fractions = fractions;
    }
    if let Some(estimators) = args.estimators {
        plan.estimators = estimators;
    }
    if let Some(seed) = args.seed {
        plan.master_seed = seed;
    }
    plan.validate()?;

    let out_dir = args
        .out_dir
        .or_else(|| std::env::var_os("SCENRISK_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)?;

    let data = load_scenarios(&args.data)?;
    let output = run_experiment(&plan, &data)?;

    let results_path = out_dir.join("results.csv");
    let summary_path = out_dir.join("summary.csv");
    let config_path = out_dir.join("run_config.toml");
    write_results_file(&output.rows, &results_path)?;
    write_summary_file(&output.summary, &summary_path)?;
    std::fs::write(&config_path, plan.to_toml_string())?;

    let failed = output
        .rows
        .iter()
        .filter(|r| r.flags.starts_with("failed:"))
        .count();
    println!(
        "{} rows ({} failed) -> {}; summary -> {}; resolved config -> {}",
        output.rows.len(),
        failed,
        results_path.display(),
        summary_path.display(),
        config_path.display()
    );
    Ok(())
}
