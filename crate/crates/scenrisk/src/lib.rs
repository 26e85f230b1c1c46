//! Scenario-parameter density estimation and collision-risk quantification
//! for automated-driving cut-in scenarios.
//!
//! The crate provides two interchangeable non-parametric density estimators
//! behind the [`DensityModel`] contract:
//!
//! * [`kde::KdeModel`] — Gaussian-kernel density estimation with the
//!   bandwidth selected by leave-one-out cross-validation, and
//! * [`flow::FlowModel`] — a masked autoregressive normalizing flow trained
//!   by Adam with early stopping and restarts.
//!
//! On top of the estimators sits a risk pipeline ([`risk`]): crude Monte
//! Carlo over a fitted exposure density, selection of the most critical
//! scenarios by minimum time-to-collision, a KDE importance density over
//! that critical subset, and a weighted importance-sampling estimate of the
//! collision probability. The cut-in scenario itself is simulated by a
//! deterministic kinematic model ([`sim`]) with a pluggable driver.
//!
//! Evaluation utilities ([`stats`]) cover held-out mean log-likelihood,
//! Pareto-front extraction, median/IQR aggregation and the Mann-Whitney U
//! test; [`io`] supplies file formats, a synthetic ground-truth scenario
//! generator and the repeated-experiment sweep.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod cli;
pub mod dataset;
pub mod density;
pub mod error;
pub mod flow;
pub mod io;
pub mod kde;
pub mod risk;
pub mod sim;
pub mod stats;

mod linalg;
mod math;
mod seeds;

pub use dataset::{Dataset, ScenarioParameters, SplitIndices, Standardization};
pub use density::{DensityModel, GaussianMixture};
pub use error::{Error, Result};
