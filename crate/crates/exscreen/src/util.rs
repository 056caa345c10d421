//! Small numeric helpers shared across modules.

/// `log(sum_i exp(x_i))`, shifted by the maximum for stability.
///
/// Empty input and all-`-inf` input both return `-inf`.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// `ln C(m, k)` computed as a product of ratios; exact to ~1e-14 for the
/// ranges used here (`m` up to a few thousand, `k <= m`).
pub(crate) fn ln_binomial(m: usize, k: usize) -> f64 {
    if k > m {
        return f64::NEG_INFINITY;
    }
    let k = k.min(m - k);
    (1..=k)
        .map(|i| (((m - k + i) as f64) / (i as f64)).ln())
        .sum()
}

/// `k * ln(k)` with the convention `0 * ln(0) = 0`.
pub(crate) fn k_ln_k(k: usize) -> f64 {
    if k == 0 {
        0.0
    } else {
        (k as f64) * (k as f64).ln()
    }
}

/// Sample mean and (unbiased) sample standard deviation; sd is 0 when
/// fewer than two values are present.
pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_direct_sum_on_small_values() {
        let xs = [0.3f64, -1.2, 2.0];
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - direct).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_is_shift_invariant_for_huge_inputs() {
        let xs = [1000.0, 1000.0 + (2.0f64).ln()];
        // exp overflows, but the shifted computation gives log(3e1000).
        assert!((log_sum_exp(&xs) - (1000.0 + (3.0f64).ln())).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_handles_empty_and_neg_infinity() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn ln_binomial_matches_exact_small_cases() {
        assert!((ln_binomial(5, 2) - (10.0f64).ln()).abs() < 1e-14);
        assert!((ln_binomial(12, 6) - (924.0f64).ln()).abs() < 1e-13);
        assert_eq!(ln_binomial(4, 0), 0.0);
        assert_eq!(ln_binomial(3, 5), f64::NEG_INFINITY);
    }

    #[test]
    fn mean_sd_single_value_has_zero_sd() {
        let (m, s) = mean_sd(&[3.5]);
        assert_eq!(m, 3.5);
        assert_eq!(s, 0.0);
    }
}
