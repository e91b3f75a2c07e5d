//! Small numeric helpers shared by the estimators.

use std::f64::consts::SQRT_2;

/// Standard normal CDF via the complementary error function.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Upper tail `Pr(Z >= x)` of the standard normal.
#[inline]
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Summation by recursive halving; deterministic for a given slice order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Ratio-of-means estimate `sum(num) / sum(den)` with a delta-method
/// standard error.
pub fn ratio_stderr(num: &[f64], den: &[f64]) -> (f64, f64) {
    debug_assert_eq!(num.len(), den.len());
    let n = num.len();
    let sn = pairwise_sum(num);
    let sd = pairwise_sum(den);
    let ratio = sn / sd;
    if n < 2 {
        return (ratio, 0.0);
    }
    let dbar = sd / n as f64;
    let resid: Vec<f64> = num
        .iter()
        .zip(den)
        .map(|(a, b)| {
            let r = a - ratio * b;
            r * r
        })
        .collect();
    let var = pairwise_sum(&resid) / (n - 1) as f64;
    (ratio, (var / n as f64).sqrt() / dbar)
}
