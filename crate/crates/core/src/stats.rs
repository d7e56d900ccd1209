//! Monte Carlo summaries.

use serde::{Deserialize, Serialize};

/// Neumaier compensated summation over a slice, in order.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    /// Non-finite samples. When nonzero, `mean` and `stderr` are NaN.
    pub nan_count: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { mean: value, stderr: 0.0, n: 1, nan_count: 0 }
    }

    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        let nan_count = values.iter().filter(|v| !v.is_finite()).count();
        if nan_count > 0 || n == 0 {
            return Estimate { mean: f64::NAN, stderr: f64::NAN, n, nan_count };
        }
        let mean = compensated_sum(values) / n as f64;
        let var = sample_variance(values, mean);
        Estimate { mean, stderr: (var / n as f64).sqrt(), n, nan_count }
    }

    pub fn is_finite(&self) -> bool {
        self.nan_count == 0 && self.mean.is_finite()
    }
}

fn sample_variance(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (compensated_sum(&dev) / (values.len() - 1) as f64).max(0.0)
}

/// Two-level estimate: outer subordinator paths, inner Brownian paths.
///
/// `stderr` is the standard deviation of the inner means over `sqrt(n_outer)`,
/// which already accounts for both levels. `within_var` and `between_var` are
/// the law-of-total-variance split of the single-path variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestedEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_outer: usize,
    pub n_inner: usize,
    pub within_var: f64,
    pub between_var: f64,
    pub nan_count: usize,
}

impl NestedEstimate {
    /// `values` holds `n_outer` consecutive groups of `n_inner` samples.
    pub fn from_groups(values: &[f64], n_outer: usize, n_inner: usize) -> Self {
        assert_eq!(values.len(), n_outer * n_inner);
        let nan_count = values.iter().filter(|v| !v.is_finite()).count();
        if nan_count > 0 || n_outer == 0 || n_inner == 0 {
            return NestedEstimate {
                mean: f64::NAN,
                stderr: f64::NAN,
                n_outer,
                n_inner,
                within_var: f64::NAN,
                between_var: f64::NAN,
                nan_count,
            };
        }
        let mut group_means = Vec::with_capacity(n_outer);
        let mut group_vars = Vec::with_capacity(n_outer);
        for g in values.chunks(n_inner) {
            let m = compensated_sum(g) / n_inner as f64;
            group_means.push(m);
            group_vars.push(sample_variance(g, m));
        }
        let mean = compensated_sum(&group_means) / n_outer as f64;
        let var_of_means = sample_variance(&group_means, mean);
        let within_var = compensated_sum(&group_vars) / n_outer as f64;
        let between_var = (var_of_means - within_var / n_inner as f64).max(0.0);
        NestedEstimate {
            mean,
            stderr: (var_of_means / n_outer as f64).sqrt(),
            n_outer,
            n_inner,
            within_var,
            between_var,
            nan_count,
        }
    }

    pub fn as_estimate(&self) -> Estimate {
        Estimate {
            mean: self.mean,
            stderr: self.stderr,
            n: self.n_outer * self.n_inner,
            nan_count: self.nan_count,
        }
    }
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
