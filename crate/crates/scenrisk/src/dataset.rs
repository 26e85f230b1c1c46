//! Shared domain types: scenario parameters, datasets, affine
//! standardization and fit/test splitting.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of cut-in scenario parameters.
pub const CUTIN_DIM: usize = 4;

/// One cut-in scenario: ego speed, other speed, lateral speed of the other
/// vehicle toward the ego lane, and the initial longitudinal gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParameters {
    /// Initial ego longitudinal velocity (m/s).
    pub v_ego: f64,
    /// Other vehicle longitudinal velocity, constant throughout (m/s).
    pub v_other: f64,
    /// Initial lateral velocity of the other vehicle toward the ego lane,
    /// constant until the lane change completes (m/s).
    pub v_lat: f64,
    /// Initial longitudinal gap from ego front to other rear (m).
    pub d_init: f64,
}

impl ScenarioParameters {
    pub fn new(v_ego: f64, v_other: f64, v_lat: f64, d_init: f64) -> Result<Self> {
        let p = Self {
            v_ego,
            v_other,
            v_lat,
            d_init,
        };
        p.validate()?;
        Ok(p)
    }

    /// All four entries must be finite and strictly positive.
    pub fn validate(&self) -> Result<()> {
        let vals = self.as_array();
        if vals.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Validation {
                rows: vec![],
                reason: format!(
                    "scenario parameters must be finite and > 0, got ({}, {}, {}, {})",
                    self.v_ego, self.v_other, self.v_lat, self.d_init
                ),
            });
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; CUTIN_DIM] {
        [self.v_ego, self.v_other, self.v_lat, self.d_init]
    }

    pub fn from_slice(row: &[f64]) -> Result<Self> {
        if row.len() != CUTIN_DIM {
            return Err(Error::DimensionMismatch {
                expected: CUTIN_DIM,
                got: row.len(),
            });
        }
        Self::new(row[0], row[1], row[2], row[3])
    }

    /// True when every parameter is finite and strictly positive.
    pub fn is_physical(row: ArrayView1<f64>) -> bool {
        row.iter().all(|v| v.is_finite() && *v > 0.0)
    }
}

/// Per-dimension affine map `z_i = (x_i - mean_i) / scale_i`.
///
/// The scale is the population standard deviation (normalizing by N), so a
/// standardized two-point column {0, 2} maps to {-1, +1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardization {
    /// Column means and population standard deviations of a data matrix.
    pub fn fit(rows: &Array2<f64>) -> Result<Self> {
        let n = rows.nrows() as f64;
        let mean = rows.mean_axis(ndarray::Axis(0)).expect("nonempty data");
        let mut scale = Array1::<f64>::zeros(rows.ncols());
        for j in 0..rows.ncols() {
            let var = rows
                .column(j)
                .iter()
                .map(|x| (x - mean[j]).powi(2))
                .sum::<f64>()
                / n;
            if var <= 0.0 {
                return Err(Error::DegenerateData { column: j });
            }
            scale[j] = var.sqrt();
        }
        Ok(Self { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check_scales(&self) -> Result<()> {
        for (j, s) in self.scale.iter().enumerate() {
            if !(*s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidStandardization {
                    column: j,
                    scale: *s,
                });
            }
        }
        Ok(())
    }

    /// Maps a point from original units to standardized space.
    pub fn to_standardized(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut z = x.to_owned();
        z -= &self.mean;
        z /= &self.scale;
        z
    }

    /// Maps a point from standardized space back to original units.
    pub fn to_original(&self, z: ArrayView1<f64>) -> Array1<f64> {
        let mut x = z.to_owned();
        x *= &self.scale;
        x += &self.mean;
        x
    }

    /// Sum of log scales, the log-Jacobian of the standardization map.
    pub fn log_scale_sum(&self) -> f64 {
        self.scale.iter().map(|s| s.ln()).sum()
    }
}

/// Change-of-variables correction for an affine standardization: converts a
/// log-density evaluated in standardized space into original units.
pub fn adjust_log_density(log_p_standardized: f64, standardization: &Standardization) -> Result<f64> {
    standardization.check_scales()?;
    Ok(log_p_standardized - standardization.log_scale_sum())
}

/// An N x d matrix of scenario parameter vectors, optionally carrying the
/// standardization applied to produce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    rows: Array2<f64>,
    standardization: Option<Standardization>,
}

impl Dataset {
    /// Wraps a data matrix in original units. Requires at least two finite rows.
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        if rows.nrows() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: rows.nrows(),
            });
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation {
                rows: vec![],
                reason: "dataset contains non-finite entries".into(),
            });
        }
        Ok(Self {
            rows,
            standardization: None,
        })
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.rows.row(i)
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    /// Selects a subset of rows, preserving the given order. The
    /// standardization record, if any, is carried over unchanged.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut out = Array2::<f64>::zeros((indices.len(), self.dim()));
        for (k, &i) in indices.iter().enumerate() {
            out.row_mut(k).assign(&self.rows.row(i));
        }
        Self {
            rows: out,
            standardization: self.standardization.clone(),
        }
    }

    /// Applies a given affine standardization to every row and attaches the
    /// record. Used when the map was fitted on a different row subset (for
    /// example the fit split only).
    pub fn with_standardization(&self, st: Standardization) -> Result<Self> {
        if st.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: st.dim(),
            });
        }
        st.check_scales()?;
        let mut rows = self.rows.clone();
        for j in 0..rows.ncols() {
            let (m, s) = (st.mean[j], st.scale[j]);
            rows.column_mut(j).mapv_inplace(|x| (x - m) / s);
        }
        Ok(Self {
            rows,
            standardization: Some(st),
        })
    }
}

/// Standardizes every column to mean 0 and population standard deviation 1,
/// recording the affine map on the returned dataset. Row order is preserved.
///
/// A zero-variance column is an error: all cut-in parameters are physical
/// quantities and must vary.
pub fn standardize(data: &Dataset) -> Result<Dataset> {
    let st = Standardization::fit(&data.rows)?;
    let mut rows = data.rows.clone();
    for j in 0..rows.ncols() {
        let (m, s) = (st.mean[j], st.scale[j]);
        rows.column_mut(j).mapv_inplace(|x| (x - m) / s);
    }
    Ok(Dataset {
        rows,
        standardization: Some(st),
    })
}

/// Disjoint fit/test index sets covering a dataset, with |fit| = round(0.8 N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub fit_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Uniformly random 80/20 split. Deterministic under a fixed seed.
pub fn split_fit_test(data: &Dataset, rng: &mut dyn RngCore) -> Result<SplitIndices> {
    split_n(data.n(), rng)
}

/// 80/20 split of `0..n`; `n` must be at least 5 so both sides are nonempty.
pub fn split_n(n: usize, rng: &mut dyn RngCore) -> Result<SplitIndices> {
    if n < 5 {
        return Err(Error::TooFewSamples { needed: 5, got: n });
    }
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    let n_fit = (0.8 * n as f64).round() as usize;
    let mut fit_indices = indices[..n_fit].to_vec();
    let mut test_indices = indices[n_fit..].to_vec();
    fit_indices.sort_unstable();
    test_indices.sort_unstable();
    Ok(SplitIndices {
        fit_indices,
        test_indices,
    })
}
