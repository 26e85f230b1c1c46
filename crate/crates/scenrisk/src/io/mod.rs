//! Data ingestion, the synthetic ground-truth generator, experiment
//! configuration and results persistence.

mod experiment;
mod files;
mod model_file;
mod synthetic;

pub use experiment::{
    experiment_row, read_results, read_summary, run_experiment, summarize, write_results,
    write_results_file, write_summary, write_summary_file, EstimatorKind, ExperimentOutput,
    ExperimentPlan, GridSpec, ResultRow, SummaryRow,
};
pub use files::{load_scenarios, save_scenarios, subsample_indices, subsample_without_replacement};
pub use model_file::{load_model, save_model, SavedModel};
pub use synthetic::{generate_synthetic, SyntheticGenerator, SyntheticGeneratorSpec};
