//! The repeated-experiment sweep: for each data fraction, repetition, and
//! estimator, subsample without replacement, fit, score held-out mean
//! log-likelihood (full test split and its Pareto front), run the risk
//! pipeline, and aggregate medians/IQRs plus Mann-Whitney comparisons.
//!
//! Seeding: subsampling, estimator fitting, and the risk stages each derive
//! their seed from (master seed, fraction index, repetition, estimator);
//! the 80/20 split pattern derives from (master seed, fraction index) only.
//! With the subsample in canonical row order this makes the fraction-1.0
//! fit split identical across repetitions, so the fully deterministic KDE
//! yields literally one model there and repetition spread comes from the
//! Monte Carlo stages alone, while the flow still varies through its
//! per-repetition initialization seeds.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_n, Dataset};
use crate::density::DensityModel;
use crate::error::{Error, Result};
use crate::flow::{train_flow_with_split, TrainConfig};
use crate::kde::{fit_kde, log_spaced_grid};
use crate::risk::{run_pipeline, RiskConfig};
use crate::seeds;
use crate::sim::{ScenarioConfig, TwoStageTtcDriver};
use crate::stats::{mann_whitney_u, mean_log_likelihood, median_iqr, pareto_front_indices};

use super::files::subsample_indices;

const TAG_SUBSAMPLE: u64 = 0x53_55;
const TAG_SPLIT: u64 = 0x53_50;
const TAG_ESTIMATOR: u64 = 0x45_53;
const TAG_RISK: u64 = 0x52_4b;

/// Density estimators the sweep can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Kde,
    Nf,
}

impl EstimatorKind {
    fn id(self) -> u64 {
        match self {
            EstimatorKind::Kde => 0,
            EstimatorKind::Nf => 1,
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorKind::Kde => write!(f, "kde"),
            EstimatorKind::Nf => write!(f, "nf"),
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kde" => Ok(EstimatorKind::Kde),
            "nf" => Ok(EstimatorKind::Nf),
            other => Err(Error::InvalidConfig(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Log-spaced bandwidth candidate grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub points: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 40,
            lo: 1e-2,
            hi: 1e1,
        }
    }
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        log_spaced_grid(self.points, self.lo, self.hi)
    }
}

/// Full experiment configuration; every field has a default and is echoed
/// into the run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentPlan {
    pub master_seed: u64,
    /// Data fractions, each in (0, 1].
    pub fractions: Vec<f64>,
    pub repetitions: usize,
    pub estimators: Vec<EstimatorKind>,
    pub risk: RiskConfig,
    pub sim: ScenarioConfig,
    pub driver: TwoStageTtcDriver,
    pub train: TrainConfig,
    pub grid: GridSpec,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            master_seed: 0,
            fractions: (1..=10).map(|i| i as f64 / 10.0).collect(),
            repetitions: 50,
            estimators: vec![EstimatorKind::Kde, EstimatorKind::Nf],
            risk: RiskConfig::default(),
            sim: ScenarioConfig::default(),
            driver: TwoStageTtcDriver::default(),
            train: TrainConfig::default(),
            grid: GridSpec::default(),
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.is_empty()
            || self
                .fractions
                .iter()
                .any(|f| !(f > &0.0 && f <= &1.0) || !f.is_finite())
        {
            return Err(Error::InvalidConfig(
                "fractions must be nonempty, each in (0, 1]".into(),
            ));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be >= 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("estimators must be nonempty".into()));
        }
        self.risk.validate()?;
        self.sim.validate()?;
        self.driver.validate()?;
        self.train.validate()?;
        if self.grid.points == 0 || !(self.grid.lo > 0.0) || self.grid.hi < self.grid.lo {
            return Err(Error::InvalidConfig("invalid bandwidth grid spec".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let plan: ExperimentPlan = toml::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("plan serializes")
    }
}

/// One (fraction, repetition, estimator) result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    pub fraction: f64,
    pub repetition: usize,
    pub estimator: EstimatorKind,
    /// Eq-style held-out mean log-likelihood, original units.
    pub mean_llh: f64,
    /// Mean log-likelihood restricted to the Pareto front of the test split.
    pub mean_llh_pareto: f64,
    pub crude_p: f64,
    pub is_p: f64,
    pub is_se: f64,
    /// Selected bandwidth for KDE; best validation mean log-likelihood for
    /// the flow.
    pub bandwidth_or_val_llh: f64,
    pub seed: u64,
    pub flags: String,
}

/// One aggregated summary line: quantiles per (fraction, estimator,
/// metric), or a Mann-Whitney NF-vs-KDE comparison per (fraction, metric).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub fraction: f64,
    pub estimator: String,
    pub metric: String,
    pub median: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
    pub u: Option<f64>,
    pub p: Option<f64>,
}

/// Sweep output: per-repetition rows plus the aggregated summary.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

/// Runs one cell of the sweep. Shared by the full sweep and by tests that
/// need a single repetition.
pub fn experiment_row(
    plan: &ExperimentPlan,
    data: &Dataset,
    fraction_index: usize,
    repetition: usize,
    estimator: EstimatorKind,
) -> Result<ResultRow> {
    let fraction = plan.fractions[fraction_index];
    let fi = fraction_index as u64;
    let rep = repetition as u64;

    // subsample in canonical (original index) order; membership is random,
    // row order is not, so equal subsample sets give equal fit sets
    let sub_seed = seeds::derive(plan.master_seed, &[TAG_SUBSAMPLE, fi, rep]);
    let mut indices = subsample_indices(
        data.n(),
        fraction,
        &mut ChaCha8Rng::seed_from_u64(sub_seed),
    )?;
    indices.sort_unstable();
    let sub = data.select(&indices);

    // split pattern fixed per fraction (not per repetition)
    let split_seed = seeds::derive(plan.master_seed, &[TAG_SPLIT, fi]);
    let split = split_n(sub.n(), &mut ChaCha8Rng::seed_from_u64(split_seed))?;
    let fit = sub.select(&split.fit_indices);
    let test = sub.select(&split.test_indices);

    let est_seed = seeds::derive(plan.master_seed, &[TAG_ESTIMATOR, fi, rep, estimator.id()]);
    let grid = plan.grid.values();
    let (model, bandwidth_or_val_llh): (Box<dyn DensityModel>, f64) = match estimator {
        EstimatorKind::Kde => {
            let m = fit_kde(&fit, &grid)?;
            let h = m.bandwidth();
            (Box::new(m), h)
        }
        EstimatorKind::Nf => {
            let config = TrainConfig {
                seed: est_seed,
                ..plan.train.clone()
            };
            let (m, report) = train_flow_with_split(&sub, &split, &config)?;
            (Box::new(m), report.validation_ll)
        }
    };

    let llh = mean_log_likelihood(model.as_ref(), &test)?;
    let pareto = pareto_front_indices(test.rows().view());
    let llh_pareto = mean_log_likelihood(model.as_ref(), &test.select(&pareto))?;

    let risk_config = RiskConfig {
        seed: seeds::derive(plan.master_seed, &[TAG_RISK, fi, rep, estimator.id()]),
        ..plan.risk.clone()
    };
    let pipeline = run_pipeline(model.as_ref(), &plan.driver, &plan.sim, &risk_config, &grid)?;

    let mut flags = String::new();
    if !llh.neg_inf_indices.is_empty() {
        flags.push_str(&format!("neg_inf_llh[{}]", llh.neg_inf_indices.len()));
    }
    if pipeline.estimate.nonphysical > 0 {
        if !flags.is_empty() {
            flags.push(';');
        }
        flags.push_str(&format!("nonphysical_is[{}]", pipeline.estimate.nonphysical));
    }

    Ok(ResultRow {
        fraction,
        repetition,
        estimator,
        mean_llh: llh.value,
        mean_llh_pareto: llh_pareto.value,
        crude_p: pipeline.monte_carlo.crude_estimate,
        is_p: pipeline.estimate.probability,
        is_se: pipeline.estimate.standard_error,
        bandwidth_or_val_llh,
        seed: est_seed,
        flags,
    })
}

const SUMMARY_METRICS: [&str; 5] = ["mean_llh", "mean_llh_pareto", "crude_p", "is_p", "is_se"];

fn metric_value(row: &ResultRow, metric: &str) -> f64 {
    match metric {
        "mean_llh" => row.mean_llh,
        "mean_llh_pareto" => row.mean_llh_pareto,
        "crude_p" => row.crude_p,
        "is_p" => row.is_p,
        "is_se" => row.is_se,
        _ => unreachable!("unknown metric"),
    }
}

/// Aggregates result rows into the summary: median/q25/q75 per (fraction,
/// estimator, metric) and NF-vs-KDE Mann-Whitney tests per fraction for the
/// two log-likelihood metrics.
pub fn summarize(plan: &ExperimentPlan, rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut summary = Vec::new();
    let ok = |r: &&ResultRow| r.flags.is_empty() || !r.mean_llh.is_nan();
    for &fraction in &plan.fractions {
        for &estimator in &plan.estimators {
            let group: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.fraction == fraction && r.estimator == estimator)
                .filter(ok)
                .collect();
            for metric in SUMMARY_METRICS {
                let values: Vec<f64> = group
                    .iter()
                    .map(|r| metric_value(r, metric))
                    .filter(|v| !v.is_nan())
                    .collect();
                if values.is_empty() {
                    continue;
                }
                if let Ok((median, q25, q75)) = median_iqr(&values) {
                    summary.push(SummaryRow {
                        fraction,
                        estimator: estimator.to_string(),
                        metric: metric.to_string(),
                        median: Some(median),
                        q25: Some(q25),
                        q75: Some(q75),
                        u: None,
                        p: None,
                    });
                }
            }
        }
        for metric in ["mean_llh", "mean_llh_pareto"] {
            let collect = |est: EstimatorKind| -> Vec<f64> {
                rows.iter()
                    .filter(|r| r.fraction == fraction && r.estimator == est)
                    .filter(ok)
                    .map(|r| metric_value(r, metric))
                    .filter(|v| v.is_finite())
                    .collect()
            };
            let nf = collect(EstimatorKind::Nf);
            let kde = collect(EstimatorKind::Kde);
            if nf.len() >= 3 && kde.len() >= 3 {
                if let Ok((u, p)) = mann_whitney_u(&nf, &kde) {
                    summary.push(SummaryRow {
                        fraction,
                        estimator: "nf_vs_kde".to_string(),
                        metric: metric.to_string(),
                        median: None,
                        q25: None,
                        q75: None,
                        u: Some(u),
                        p: Some(p),
                    });
                }
            }
        }
    }
    summary
}

/// Runs the full sweep. Individual repetition failures are recorded as
/// flagged rows and the sweep continues; more than 20% failures aborts.
pub fn run_experiment(plan: &ExperimentPlan, data: &Dataset) -> Result<ExperimentOutput> {
    plan.validate()?;
    let cells: Vec<(usize, usize, EstimatorKind)> = (0..plan.fractions.len())
        .flat_map(|fi| {
            (0..plan.repetitions).flat_map(move |rep| {
                plan.estimators.iter().map(move |&e| (fi, rep, e))
            })
        })
        .collect();

    let rows: Vec<ResultRow> = cells
        .par_iter()
        .map(|&(fi, rep, est)| {
            experiment_row(plan, data, fi, rep, est).unwrap_or_else(|e| ResultRow {
                fraction: plan.fractions[fi],
                repetition: rep,
                estimator: est,
                mean_llh: f64::NAN,
                mean_llh_pareto: f64::NAN,
                crude_p: f64::NAN,
                is_p: f64::NAN,
                is_se: f64::NAN,
                bandwidth_or_val_llh: f64::NAN,
                seed: seeds::derive(plan.master_seed, &[TAG_ESTIMATOR, fi as u64, rep as u64, est.id()]),
                flags: format!("failed: {e}"),
            })
        })
        .collect();

    let failures = rows.iter().filter(|r| r.flags.starts_with("failed:")).count();
    if failures * 5 > rows.len() {
        return Err(Error::ExperimentFailed {
            failures,
            total: rows.len(),
        });
    }

    let summary = summarize(plan, &rows);
    Ok(ExperimentOutput { rows, summary })
}

fn opt_to_string(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        Ok(Some(s.parse::<f64>().map_err(|e| Error::Parse {
            line: 0,
            reason: e.to_string(),
        })?))
    }
}

const RESULT_HEADER: [&str; 11] = [
    "fraction",
    "repetition",
    "estimator",
    "mean_llh",
    "mean_llh_pareto",
    "crude_p",
    "is_p",
    "is_se",
    "bandwidth_or_val_llh",
    "seed",
    "flags",
];

/// Writes the per-repetition results as delimited text.
pub fn write_results<W: std::io::Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RESULT_HEADER)?;
    for r in rows {
        w.write_record([
            r.fraction.to_string(),
            r.repetition.to_string(),
            r.estimator.to_string(),
            r.mean_llh.to_string(),
            r.mean_llh_pareto.to_string(),
            r.crude_p.to_string(),
            r.is_p.to_string(),
            r.is_se.to_string(),
            r.bandwidth_or_val_llh.to_string(),
            r.seed.to_string(),
            r.flags.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results_file(rows: &[ResultRow], path: &Path) -> Result<()> {
    write_results(rows, std::fs::File::create(path)?)
}

/// Parses a results file written by [`write_results`].
pub fn read_results<R: std::io::Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for record in r.records() {
        let rec = record?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| -> &str { rec.get(i).unwrap_or("") };
        let parse_f = |i: usize| -> Result<f64> {
            field(i).parse::<f64>().map_err(|e| Error::Parse {
                line,
                reason: format!("field {i}: {e}"),
            })
        };
        out.push(ResultRow {
            fraction: parse_f(0)?,
            repetition: field(1).parse().map_err(|_| Error::Parse {
                line,
                reason: "repetition".into(),
            })?,
            estimator: field(2).parse()?,
            mean_llh: parse_f(3)?,
            mean_llh_pareto: parse_f(4)?,
            crude_p: parse_f(5)?,
            is_p: parse_f(6)?,
            is_se: parse_f(7)?,
            bandwidth_or_val_llh: parse_f(8)?,
            seed: field(9).parse().map_err(|_| Error::Parse {
                line,
                reason: "seed".into(),
            })?,
            flags: field(10).to_string(),
        });
    }
    Ok(out)
}

const SUMMARY_HEADER: [&str; 8] = [
    "fraction", "estimator", "metric", "median", "q25", "q75", "u", "p",
];

/// Writes the aggregated summary as delimited text.
pub fn write_summary<W: std::io::Write>(rows: &[SummaryRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.fraction.to_string(),
            r.estimator.clone(),
            r.metric.clone(),
            opt_to_string(r.median),
            opt_to_string(r.q25),
            opt_to_string(r.q75),
            opt_to_string(r.u),
            opt_to_string(r.p),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_file(rows: &[SummaryRow], path: &Path) -> Result<()> {
    write_summary(rows, std::fs::File::create(path)?)
}

/// Parses a summary file written by [`write_summary`].
pub fn read_summary<R: std::io::Read>(reader: R) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for record in r.records() {
        let rec = record?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| -> &str { rec.get(i).unwrap_or("") };
        out.push(SummaryRow {
            fraction: field(0).parse::<f64>().map_err(|e| Error::Parse {
                line,
                reason: e.to_string(),
            })?,
            estimator: field(1).to_string(),
            metric: field(2).to_string(),
            median: parse_opt(field(3))?,
            q25: parse_opt(field(4))?,
            q75: parse_opt(field(5))?,
            u: parse_opt(field(6))?,
            p: parse_opt(field(7))?,
        });
    }
    Ok(out)
}
