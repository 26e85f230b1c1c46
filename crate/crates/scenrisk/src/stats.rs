//! Evaluation metrics: held-out mean log-likelihood, Pareto-front index
//! sets, median/IQR aggregation and the Mann-Whitney U test.

use ndarray::ArrayView2;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::Dataset;
use crate::density::DensityModel;
use crate::error::{Error, Result};

/// Mean log-likelihood of a test set under a model, with the indices of any
/// points whose log-density is -inf (support failures propagate, they are
/// not winsorized away).
#[derive(Debug, Clone, PartialEq)]
pub struct MeanLogLikelihood {
    pub value: f64,
    pub neg_inf_indices: Vec<usize>,
}

/// Average log-density of the test points, densities in original units.
pub fn mean_log_likelihood(model: &dyn DensityModel, test: &Dataset) -> Result<MeanLogLikelihood> {
    if test.n() == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let mut sum = 0.0;
    let mut neg_inf_indices = Vec::new();
    for i in 0..test.n() {
        let lp = model.log_density(test.row(i))?;
        if lp == f64::NEG_INFINITY {
            neg_inf_indices.push(i);
        }
        sum += lp;
    }
    Ok(MeanLogLikelihood {
        value: sum / test.n() as f64,
        neg_inf_indices,
    })
}

/// True when `a` strictly dominates `b`: every coordinate of `a` is
/// strictly larger than the corresponding coordinate of `b`.
fn strictly_dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b.iter()).all(|(x, y)| x > y)
}

/// Indices of the points on the Pareto front: the union of the points that
/// no other point strictly dominates (upper front) and the points that
/// strictly dominate no other point (lower front).
pub fn pareto_front_indices(points: ArrayView2<f64>) -> Vec<usize> {
    let n = points.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| points.row(i).to_vec()).collect();
    let mut out = Vec::new();
    for j in 0..n {
        let undominated = (0..n).all(|k| k == j || !strictly_dominates(&rows[k], &rows[j]));
        let dominates_none = (0..n).all(|k| k == j || !strictly_dominates(&rows[j], &rows[k]));
        if undominated || dominates_none {
            out.push(j);
        }
    }
    out
}

/// Type-7 (linear interpolation between order statistics) quantile of a
/// sorted slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Median and interquartile bounds with linear-interpolation quantiles.
pub fn median_iqr(values: &[f64]) -> Result<(f64, f64, f64)> {
    if values.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN values"));
    Ok((
        quantile_sorted(&sorted, 0.5),
        quantile_sorted(&sorted, 0.25),
        quantile_sorted(&sorted, 0.75),
    ))
}

/// Mann-Whitney U statistic of the first sample (midrank tie handling) and
/// a two-sided p-value from the normal approximation with tie-corrected
/// variance and continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 3 || b.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: a.len().min(b.len()),
        });
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;

    let mut pooled: Vec<(f64, usize)> = a
        .iter()
        .map(|v| (*v, 0usize))
        .chain(b.iter().map(|v| (*v, 1usize)))
        .collect();
    pooled.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("non-NaN values"));

    // midranks and tie-group sizes
    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0; // average of ranks i+1..=j
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        for item in &pooled[i..j] {
            if item.1 == 0 {
                rank_sum_a += rank;
            }
        }
        i = j;
    }

    let u_a = rank_sum_a - na * (na + 1.0) / 2.0;
    let mean_u = na * nb / 2.0;
    let var_u = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var_u <= 0.0 {
        return Err(Error::DegenerateVariance);
    }

    // continuity correction toward the mean
    let diff = u_a - mean_u;
    let corrected = if diff > 0.0 {
        diff - 0.5
    } else if diff < 0.0 {
        diff + 0.5
    } else {
        0.0
    };
    let z = corrected / var_u.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let p = (2.0 * (1.0 - normal.cdf(z.abs()))).min(1.0);
    Ok((u_a, p))
}
