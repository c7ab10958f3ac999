//! Small statistics helpers for the Monte Carlo experiments.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

pub fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    (variance(xs) * n / (n - 1.0)).sqrt()
}

/// Linear-interpolated quantile of unsorted data.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Percentile bootstrap interval for the mean at two-sided `level`.
pub fn bootstrap_mean_ci<R: Rng + ?Sized>(xs: &[f64], level: f64, resamples: usize, rng: &mut R) -> Interval {
    let n = xs.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Interval {
        lo: quantile_sorted(&means, alpha),
        hi: quantile_sorted(&means, 1.0 - alpha),
    }
}

/// One-sided paired t-test of `mean(a - b) > 0`. Returns `(t, p_value)`.
pub fn paired_t_greater(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len());
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let sd = sample_std(&d);
    if sd == 0.0 {
        let m = mean(&d);
        return if m > 0.0 {
            (f64::INFINITY, 0.0)
        } else {
            (if m < 0.0 { f64::NEG_INFINITY } else { 0.0 }, if m < 0.0 { 1.0 } else { 0.5 })
        };
    }
    let t = mean(&d) / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("degrees of freedom > 0");
    (t, 1.0 - dist.cdf(t))
}
