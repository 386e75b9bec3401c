//! Small numerical and statistical helpers shared across modules.

use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().copied().collect::<CompensatedSum>().value() / values.len() as f64
}

/// Mean with the iid standard error `s / sqrt(N)`.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let m = mean(values);
    if n < 2 {
        return (m, 0.0);
    }
    let ss: CompensatedSum = values.iter().map(|v| (v - m) * (v - m)).collect();
    let var = ss.value() / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

/// Batch-means estimate of a mean and its standard error.
///
/// The series is split into `batches` contiguous blocks; a trailing remainder
/// shorter than one block is dropped from the SE but kept in the mean.
pub fn batch_means(values: &[f64], batches: usize) -> (f64, f64) {
    let n = values.len();
    let batches = batches.max(2);
    if n < batches {
        return mean_and_se(values);
    }
    let size = n / batches;
    let batch_avgs: Vec<f64> = values.chunks_exact(size).take(batches).map(mean).collect();
    let (_, se) = mean_and_se(&batch_avgs);
    (mean(values), se)
}

pub fn binomial_se(p: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal upper tail `P[Z > x]`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// `log P[Z > x]`, accurate far into the upper tail.
pub fn log_normal_sf(x: f64) -> f64 {
    if x < 30.0 {
        normal_sf(x).ln()
    } else {
        // Mills-ratio asymptotic series
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - x.ln() - 0.5 * (2.0 * PI).ln() + series.ln()
    }
}

/// Inverse standard normal CDF.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// `log(sum(exp(v)))`, stable for large magnitudes.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: CompensatedSum = values.iter().map(|v| (v - max).exp()).collect();
    max + s.value().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut acc = CompensatedSum::new();
        acc.add(1e16);
        for _ in 0..10 {
            acc.add(1.0);
        }
        acc.add(-1e16);
        assert_eq!(acc.value(), 10.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-12, 1e-6, 0.01, 0.3, 0.5, 0.8, 0.999, 1.0 - 1e-9] {
            let x = normal_quantile(p);
            let err = (normal_cdf(x) - p).abs() / p.min(1.0 - p);
            assert!(err <= 1e-10, "p={p} rel err {err:e}");
        }
    }

    #[test]
    fn log_sf_is_continuous_across_switch() {
        let below = log_normal_sf(30.0 - 1e-9);
        let above = log_normal_sf(30.0);
        assert!((below - above).abs() < 1e-6);
        assert!((log_normal_sf(0.0) - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn batch_means_on_constant_series_has_zero_se() {
        let v = vec![2.5; 1000];
        let (m, se) = batch_means(&v, 10);
        assert_eq!(m, 2.5);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn log_sum_exp_matches_direct() {
        let v = [0.1, -2.0, 3.0];
        let direct = v.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&v) - direct).abs() < 1e-14);
        assert!((log_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
