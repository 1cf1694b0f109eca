//! Small statistical helpers: summaries, confidence intervals, and the
//! Kolmogorov-Smirnov statistic.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Estimate with a symmetric confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub half_width: f64,
}

impl Estimate {
    pub fn lo(&self) -> f64 {
        self.value - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.value + self.half_width
    }

    /// True when `target` lies within `k` half-widths of the estimate.
    pub fn covers(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.half_width
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Two-sided standard normal quantile for confidence `level`.
pub fn normal_quantile(level: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(0.5 + 0.5 * level)
}

/// Two-sided Student-t quantile with `dof` degrees of freedom.
pub fn t_quantile(level: f64, dof: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof).expect("positive dof").inverse_cdf(0.5 + 0.5 * level)
}

/// Mean of independent samples with a 95% Student-t interval.
pub fn mean_ci(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n < 2 {
        return Estimate { value: xs.first().copied().unwrap_or(f64::NAN), half_width: f64::INFINITY };
    }
    Estimate { value: mean(xs), half_width: t_quantile(0.95, (n - 1) as f64) * std_error(xs) }
}

/// 95% interval from batch means of equal-length batches.
pub fn batch_means_ci(batch_means: &[f64]) -> Estimate {
    mean_ci(batch_means)
}

/// Wilson score interval for `successes` out of `trials`, as `(lo, hi)`.
pub fn wilson(successes: usize, trials: usize, level: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = normal_quantile(level);
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// One-sample Kolmogorov-Smirnov statistic against `cdf`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (k, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((k as f64 + 1.0) / n - f).max(f - k as f64 / n);
    }
    d
}

/// Asymptotic p-value of a KS statistic `d` for sample size `n`, with the
/// usual small-sample correction of the argument.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Asymptotic critical value of the one-sample KS statistic at level `alpha`.
pub fn ks_critical(alpha: f64, n: usize) -> f64 {
    (-0.5 * (0.5 * alpha).ln()).sqrt() / (n as f64).sqrt()
}

/// Least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference_values() {
        // 0 of 10 and 10 of 10 at 95%
        let (lo, hi) = wilson(0, 10, 0.95);
        assert!(lo.abs() < 1e-15);
        assert!((hi - 0.27753).abs() < 1e-5);
        let (lo, hi) = wilson(10, 10, 0.95);
        assert!((lo - 0.72247).abs() < 1e-5);
        assert!((hi - 1.0).abs() < 1e-12);
        let (lo, hi) = wilson(50, 100, 0.95);
        assert!((lo - 0.40383).abs() < 1e-5 && (hi - 0.59617).abs() < 1e-5);
    }

    #[test]
    fn quantiles() {
        assert!((normal_quantile(0.95) - 1.959964).abs() < 1e-6);
        assert!((t_quantile(0.95, 19.0) - 2.093024).abs() < 1e-6);
    }

    #[test]
    fn ks_on_perfect_grid() {
        let xs: Vec<f64> = (0..100).map(|k| (k as f64 + 0.5) / 100.0).collect();
        let d = ks_statistic(&xs, |x| x);
        assert!((d - 0.005).abs() < 1e-12);
        assert!(ks_p_value(d, 100) > 0.99);
        assert!(ks_p_value(0.2, 100) < 1e-3);
        assert!((ks_critical(0.01, 10_000) - 1.6276236 / 100.0).abs() < 1e-9);
    }

    #[test]
    fn summaries() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert!((ols_slope(&xs, &[3.0, 5.0, 7.0, 9.0]) - 2.0).abs() < 1e-15);
        let e = mean_ci(&xs);
        assert!(e.covers(2.5, 0.0));
    }
}
