//! The risk-quantification pipeline: crude Monte Carlo over a fitted
//! exposure density, selection of the most critical scenarios by minimum
//! time-to-collision, a KDE importance density over that subset, and the
//! weighted importance-sampling estimator with its standard error.

use ndarray::{Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ScenarioParameters};
use crate::density::DensityModel;
use crate::error::{Error, Result};
use crate::kde::{fit_kde, KdeModel};
use crate::seeds;
use crate::sim::{simulate_cutin, DriverModel, ScenarioConfig, SimulationOutcome};

/// Sample counts of the pipeline stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskConfig {
    /// Crude Monte Carlo runs.
    pub n_mc: usize,
    /// Importance-sampling runs.
    pub n_nis: usize,
    /// Number of most-critical scenarios the importance density is built on.
    pub n_c: usize,
    pub seed: u64,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            n_mc: 10_000,
            n_nis: 10_000,
            n_c: 100,
            seed: 0,
        }
    }
}

impl RiskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mc == 0 || self.n_nis == 0 || self.n_c == 0 {
            return Err(Error::InvalidConfig("sample counts must be positive".into()));
        }
        if self.n_c >= self.n_mc {
            return Err(Error::InvalidConfig(format!(
                "n_c = {} must be below n_mc = {}",
                self.n_c, self.n_mc
            )));
        }
        Ok(())
    }
}

/// Crude Monte Carlo stage output.
#[derive(Debug, Clone)]
pub struct MonteCarloResult {
    /// Sampled parameter vectors, one per row.
    pub samples: Array2<f64>,
    /// Simulation outcome per sample.
    pub outcomes: Vec<SimulationOutcome>,
    /// Fraction of collisions among the samples.
    pub crude_estimate: f64,
    /// Draws discarded and redrawn because a parameter was non-physical.
    pub resampled: usize,
}

/// Samples the exposure density and simulates every draw. Draws with any
/// non-positive parameter are discarded and redrawn (counted); a resample
/// rate above 50% fails.
pub fn crude_monte_carlo(
    exposure: &dyn DensityModel,
    driver: &dyn DriverModel,
    sim_config: &ScenarioConfig,
    n_mc: usize,
    rng: &mut ChaCha8Rng,
) -> Result<MonteCarloResult> {
    if n_mc == 0 {
        return Err(Error::InvalidConfig("n_mc must be at least 1".into()));
    }
    let d = exposure.dim();
    let mut samples = Array2::<f64>::zeros((n_mc, d));
    let mut accepted = 0usize;
    let mut resampled = 0usize;
    while accepted < n_mc {
        let draw = exposure.sample(rng, 1);
        let row = draw.row(0);
        if ScenarioParameters::is_physical(row) {
            samples.row_mut(accepted).assign(&row);
            accepted += 1;
        } else {
            resampled += 1;
            let attempts = accepted + resampled;
            if attempts >= 200 && resampled * 2 > attempts {
                return Err(Error::ExposureUnphysical {
                    rate: 100.0 * resampled as f64 / attempts as f64,
                });
            }
        }
    }

    let outcomes = simulate_rows(&samples, driver, sim_config)?;
    let collisions = outcomes.iter().filter(|o| o.collision).count();
    Ok(MonteCarloResult {
        samples,
        outcomes,
        crude_estimate: collisions as f64 / n_mc as f64,
        resampled,
    })
}

fn simulate_rows(
    samples: &Array2<f64>,
    driver: &dyn DriverModel,
    sim_config: &ScenarioConfig,
) -> Result<Vec<SimulationOutcome>> {
    (0..samples.nrows())
        .into_par_iter()
        .map(|i| {
            let row = samples.row(i);
            let p = ScenarioParameters::from_slice(row.as_slice().expect("contiguous row"))?;
            simulate_cutin(&p, driver, sim_config)
        })
        .collect()
}

/// The `n_c` most critical sampled scenarios, ordered by minimum
/// time-to-collision with collisions (TTC 0) first; ties break by sample
/// order.
pub fn select_critical(result: &MonteCarloResult, n_c: usize) -> Result<Dataset> {
    if n_c >= result.outcomes.len() {
        return Err(Error::InvalidConfig(format!(
            "n_c = {n_c} must be below the number of Monte Carlo samples"
        )));
    }
    let mut order: Vec<usize> = (0..result.outcomes.len()).collect();
    order.sort_by(|&a, &b| {
        result.outcomes[a]
            .min_ttc
            .partial_cmp(&result.outcomes[b].min_ttc)
            .expect("min_ttc is never NaN")
            .then(a.cmp(&b))
    });
    order.truncate(n_c);
    let mut rows = Array2::<f64>::zeros((n_c, result.samples.ncols()));
    for (k, &i) in order.iter().enumerate() {
        rows.row_mut(k).assign(&result.samples.row(i));
    }
    Dataset::new(rows)
}

/// KDE with leave-one-out bandwidth over the critical subset; the paper's
/// choice of importance density for its tail-covering simplicity.
pub fn build_importance_density(critical: &Dataset, grid: &[f64]) -> Result<KdeModel> {
    if critical.n() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: critical.n(),
        });
    }
    fit_kde(critical, grid)
}

/// Weight statistics recorded alongside the estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightSummary {
    /// Largest p/q ratio over all importance samples.
    pub max: f64,
    /// Mean p/q ratio over the samples that ended in a collision.
    pub mean_at_collisions: f64,
}

/// Importance-sampling collision-probability estimate with provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub probability: f64,
    /// Sample standard deviation of the weighted indicators over sqrt(N).
    pub standard_error: f64,
    pub n_nis: usize,
    pub weights: WeightSummary,
    /// Importance samples with a non-positive parameter; they score 0
    /// without being simulated (no clamping, weights stay unbiased).
    pub nonphysical: usize,
    pub exposure_fingerprint: String,
    pub importance_fingerprint: String,
    pub seed: u64,
}

/// Core weighted estimator over an arbitrary binary outcome function:
/// draws from `q`, weights outcomes by `p/q` computed in log space.
pub fn importance_sampling_with<F>(
    exposure: &dyn DensityModel,
    importance: &dyn DensityModel,
    outcome: F,
    n_nis: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RiskEstimate>
where
    F: Fn(ArrayView1<f64>) -> Result<f64> + Sync,
{
    if n_nis == 0 {
        return Err(Error::InvalidConfig("n_nis must be at least 1".into()));
    }
    let samples = importance.sample(rng, n_nis);
    let weighted: Vec<(f64, f64, bool)> = (0..n_nis)
        .into_par_iter()
        .map(|k| {
            let x = samples.row(k);
            let log_q = importance.log_density(x)?;
            if log_q == f64::NEG_INFINITY {
                return Err(Error::NumericalSupport { index: k });
            }
            let log_p = exposure.log_density(x)?;
            let w = (log_p - log_q).exp();
            let kappa = outcome(x)?;
            Ok((kappa * w, w, kappa > 0.0))
        })
        .collect::<Result<_>>()?;

    let values: Vec<f64> = weighted.iter().map(|(v, _, _)| *v).collect();
    let mean = values.iter().sum::<f64>() / n_nis as f64;
    let variance = if n_nis > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_nis - 1) as f64
    } else {
        0.0
    };
    let collision_weights: Vec<f64> = weighted
        .iter()
        .filter(|(_, _, hit)| *hit)
        .map(|(_, w, _)| *w)
        .collect();
    let weights = WeightSummary {
        max: weighted.iter().map(|(_, w, _)| *w).fold(0.0, f64::max),
        mean_at_collisions: if collision_weights.is_empty() {
            0.0
        } else {
            collision_weights.iter().sum::<f64>() / collision_weights.len() as f64
        },
    };

    Ok(RiskEstimate {
        probability: mean,
        standard_error: (variance / n_nis as f64).sqrt(),
        n_nis,
        weights,
        nonphysical: 0,
        exposure_fingerprint: exposure.fingerprint(),
        importance_fingerprint: importance.fingerprint(),
        seed: 0,
    })
}

/// Importance sampling over simulated cut-in outcomes. Non-physical
/// importance draws (any parameter <= 0) receive outcome 0 and are counted;
/// clamping them would bias the weights.
pub fn importance_sampling_estimate(
    exposure: &dyn DensityModel,
    importance: &dyn DensityModel,
    driver: &dyn DriverModel,
    sim_config: &ScenarioConfig,
    n_nis: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RiskEstimate> {
    let nonphysical = std::sync::atomic::AtomicUsize::new(0);
    let mut estimate = importance_sampling_with(
        exposure,
        importance,
        |x| {
            if !ScenarioParameters::is_physical(x) {
                nonphysical.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                return Ok(0.0);
            }
            let p = ScenarioParameters::from_slice(x.as_slice().expect("contiguous row"))?;
            let outcome = simulate_cutin(&p, driver, sim_config)?;
            Ok(if outcome.collision { 1.0 } else { 0.0 })
        },
        n_nis,
        rng,
    )?;
    estimate.nonphysical = nonphysical.into_inner();
    Ok(estimate)
}

/// Every intermediate pipeline artifact, retrievable for audit.
pub struct PipelineRun {
    pub monte_carlo: MonteCarloResult,
    pub critical: Dataset,
    pub importance: KdeModel,
    pub estimate: RiskEstimate,
}

/// Structured audit record of one pipeline run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineAudit {
    pub seed: u64,
    pub n_mc: usize,
    pub n_c: usize,
    pub n_nis: usize,
    pub crude_estimate: f64,
    pub mc_resampled: usize,
    pub importance_bandwidth: f64,
    pub probability: f64,
    pub standard_error: f64,
    pub weight_max: f64,
    pub weight_mean_at_collisions: f64,
    pub nonphysical_importance_samples: usize,
    pub exposure_fingerprint: String,
    pub importance_fingerprint: String,
}

impl PipelineRun {
    pub fn audit(&self, config: &RiskConfig) -> PipelineAudit {
        PipelineAudit {
            seed: config.seed,
            n_mc: config.n_mc,
            n_c: config.n_c,
            n_nis: config.n_nis,
            crude_estimate: self.monte_carlo.crude_estimate,
            mc_resampled: self.monte_carlo.resampled,
            importance_bandwidth: self.importance.bandwidth(),
            probability: self.estimate.probability,
            standard_error: self.estimate.standard_error,
            weight_max: self.estimate.weights.max,
            weight_mean_at_collisions: self.estimate.weights.mean_at_collisions,
            nonphysical_importance_samples: self.estimate.nonphysical,
            exposure_fingerprint: self.estimate.exposure_fingerprint.clone(),
            importance_fingerprint: self.estimate.importance_fingerprint.clone(),
        }
    }
}

/// Runs the four pipeline stages left to right: crude Monte Carlo,
/// critical-scenario selection, KDE importance density, importance
/// sampling. Fully reproducible from the config seed.
pub fn run_pipeline(
    exposure: &dyn DensityModel,
    driver: &dyn DriverModel,
    sim_config: &ScenarioConfig,
    risk_config: &RiskConfig,
    kde_grid: &[f64],
) -> Result<PipelineRun> {
    risk_config.validate()?;
    let mut mc_rng = ChaCha8Rng::seed_from_u64(seeds::derive(risk_config.seed, &[0x4d43]));
    let monte_carlo =
        crude_monte_carlo(exposure, driver, sim_config, risk_config.n_mc, &mut mc_rng)?;
    let critical = select_critical(&monte_carlo, risk_config.n_c)?;
    let importance = build_importance_density(&critical, kde_grid)?;
    let mut is_rng = ChaCha8Rng::seed_from_u64(seeds::derive(risk_config.seed, &[0x4953]));
    let mut estimate = importance_sampling_estimate(
        exposure,
        &importance,
        driver,
        sim_config,
        risk_config.n_nis,
        &mut is_rng,
    )?;
    estimate.seed = risk_config.seed;
    Ok(PipelineRun {
        monte_carlo,
        critical,
        importance,
        estimate,
    })
}
