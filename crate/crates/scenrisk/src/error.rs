//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A data column has zero variance and cannot be standardized.
    #[error("column {column} has zero variance; all scenario parameters must vary")]
    DegenerateData { column: usize },

    /// A standardization record carries a non-positive scale.
    #[error("invalid standardization: scale for column {column} is {scale}, must be > 0")]
    InvalidStandardization { column: usize, scale: f64 },

    /// Fewer samples than the operation requires.
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    /// A query point does not match the model dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A bandwidth grid is empty or contains non-positive entries.
    #[error("invalid bandwidth grid: {reason}")]
    InvalidGrid { reason: String },

    /// Every bandwidth candidate scored -inf in leave-one-out cross-validation.
    #[error("degenerate bandwidth selection: every candidate scored -inf")]
    DegenerateBandwidth,

    /// A non-finite value appeared inside a flow layer.
    #[error("numerical overflow in flow layer {layer}: {context}")]
    NumericalOverflow { layer: usize, context: String },

    /// Every training restart diverged.
    #[error("flow training failed: all {restarts} restarts diverged")]
    TrainingFailed { restarts: usize },

    /// A driver model violated its contract during simulation.
    #[error("simulation fault: {0}")]
    SimulationFault(String),

    /// The exposure model keeps producing non-physical parameter vectors.
    #[error("exposure model unphysical: resample rate {rate:.1}% exceeds 50%")]
    ExposureUnphysical { rate: f64 },

    /// The importance density underflowed to zero at one of its own samples.
    #[error("importance density has no support at sample {index} (q underflowed to 0)")]
    NumericalSupport { index: usize },

    /// All values identical across both Mann-Whitney samples.
    #[error("degenerate variance: all values identical across both samples")]
    DegenerateVariance,

    /// Rejection sampling from a truncated mixture accepts too rarely.
    #[error("synthetic spec too truncated: acceptance rate {rate:.2}% is below 1%")]
    SpecTooTruncated { rate: f64 },

    /// A scenario file could not be parsed.
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    /// Rows violate the scenario-parameter invariants.
    #[error("validation error: {reason} (rows {rows:?})")]
    Validation { rows: Vec<usize>, reason: String },

    /// Too many repetitions of an experiment failed.
    #[error("experiment failed: {failures} of {total} repetitions errored (> 20%)")]
    ExperimentFailed { failures: usize, total: usize },

    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("model file error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config file error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Process exit code: 1 for validation problems, 2 for runtime faults.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DegenerateData { .. }
            | Error::InvalidStandardization { .. }
            | Error::TooFewSamples { .. }
            | Error::DimensionMismatch { .. }
            | Error::InvalidGrid { .. }
            | Error::Parse { .. }
            | Error::Validation { .. }
            | Error::InvalidConfig(_)
            | Error::Toml(_) => 1,
            _ => 2,
        }
    }
}
