//! Scenario-parameter files and subsampling.
//!
//! Scenario files are delimited text with the header
//! `v_ego,v_other,v_lat,d_init` (units m/s, m/s, m/s, m); lines starting
//! with `#` are comments.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::RngCore;

use crate::dataset::{Dataset, CUTIN_DIM};
use crate::error::{Error, Result};

const HEADER: [&str; CUTIN_DIM] = ["v_ego", "v_other", "v_lat", "d_init"];

/// Reads and validates a scenario-parameter file.
pub fn load_scenarios(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;

    let headers = reader.headers()?.clone();
    if headers.len() != CUTIN_DIM
        || headers.iter().zip(HEADER.iter()).any(|(h, e)| h != *e)
    {
        return Err(Error::Parse {
            line: 1,
            reason: format!(
                "expected header `{}`, found `{}`",
                HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut rows: Vec<[f64; CUTIN_DIM]> = Vec::new();
    let mut invalid_rows: Vec<usize> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(i + 2);
        if record.len() != CUTIN_DIM {
            return Err(Error::Parse {
                line,
                reason: format!("expected {} fields, found {}", CUTIN_DIM, record.len()),
            });
        }
        let mut row = [0.0; CUTIN_DIM];
        for (j, field) in record.iter().enumerate() {
            row[j] = field.parse::<f64>().map_err(|e| Error::Parse {
                line,
                reason: format!("field `{field}`: {e}"),
            })?;
        }
        if row.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            invalid_rows.push(i + 1);
        }
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            reason: "file contains no data rows".into(),
        });
    }
    if !invalid_rows.is_empty() {
        return Err(Error::Validation {
            rows: invalid_rows,
            reason: "scenario parameters must be finite and > 0".into(),
        });
    }

    let matrix = Array2::from_shape_fn((rows.len(), CUTIN_DIM), |(i, j)| rows[i][j]);
    Dataset::new(matrix)
}

/// Writes a dataset as a scenario-parameter file.
pub fn save_scenarios(data: &Dataset, path: &Path) -> Result<()> {
    if data.dim() != CUTIN_DIM {
        return Err(Error::DimensionMismatch {
            expected: CUTIN_DIM,
            got: data.dim(),
        });
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    for row in data.rows().rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// `round(fraction * n)` distinct indices, uniform without replacement, in
/// the random draw order.
pub fn subsample_indices(n: usize, fraction: f64, rng: &mut dyn RngCore) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "fraction must be in (0, 1], got {fraction}"
        )));
    }
    let k = ((fraction * n as f64).round() as usize).max(1);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    indices.truncate(k);
    Ok(indices)
}

/// Uniform subsample without replacement; a single data entry appears at
/// most once. Fraction 1.0 returns all rows in permuted order.
pub fn subsample_without_replacement(
    data: &Dataset,
    fraction: f64,
    rng: &mut dyn RngCore,
) -> Result<Dataset> {
    let indices = subsample_indices(data.n(), fraction, rng)?;
    Ok(data.select(&indices))
}
