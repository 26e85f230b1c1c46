//! Small numeric helpers shared across the crate.

/// Natural log of 2*pi.
pub const LN_2PI: f64 = 1.837877066409345483560659472811;

/// Numerically stable log(sum(exp(x_i))) over a slice.
///
/// Returns -inf for an all(-inf) input; never produces NaN from
/// underflow alone.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Log-density of the standard d-variate Gaussian at squared radius `sq_norm`.
pub fn std_normal_logpdf_sq(sq_norm: f64, d: usize) -> f64 {
    -0.5 * sq_norm - 0.5 * d as f64 * LN_2PI
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsumexp_matches_naive_in_safe_range() {
        let xs: [f64; 3] = [0.5, 2.0, -1.0];
        let naive = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((logsumexp(&xs) - naive).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_survives_large_magnitudes() {
        // naive exp would overflow/underflow here
        let xs = [-1000.0, -1001.0];
        let expected = -1000.0 + (1.0 + (-1.0f64).exp()).ln();
        assert!((logsumexp(&xs) - expected).abs() < 1e-12);
        assert!(logsumexp(&[1234.0, 1232.0]).is_finite());
    }

    #[test]
    fn logsumexp_all_neg_inf() {
        assert_eq!(
            logsumexp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn std_normal_at_origin() {
        // d=1: -0.5*ln(2*pi)
        assert!((std_normal_logpdf_sq(0.0, 1) + 0.9189385332046727).abs() < 1e-12);
    }
}
