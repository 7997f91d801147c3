//! Small statistical helpers: binomial intervals, normal intervals, least squares.

use statrs::distribution::{Beta, ContinuousCDF, Normal};

/// Two-sided Clopper-Pearson interval for `k` successes in `n` trials.
pub fn clopper_pearson(k: u64, n: u64, confidence: f64) -> (f64, f64) {
    assert!(n > 0 && k <= n);
    let tail = (1.0 - confidence) / 2.0;
    let (k, n) = (k as f64, n as f64);
    let lo = if k == 0.0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0).unwrap().inverse_cdf(tail)
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new(k + 1.0, n - k).unwrap().inverse_cdf(1.0 - tail)
    };
    (lo, hi)
}

/// Two-sided standard normal quantile for the given confidence.
pub fn z_value(confidence: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.5 + confidence / 2.0)
}

/// Sample mean with a normal-approximation interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub lo: f64,
    pub hi: f64,
    pub samples: u64,
}

impl MeanEstimate {
    pub fn from_moments(sum: f64, sum_sq: f64, n: u64, confidence: f64) -> Self {
        assert!(n > 0);
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 { ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
        let std_err = (var / nf).sqrt();
        let z = z_value(confidence);
        MeanEstimate { mean, std_err, lo: mean - z * std_err, hi: mean + z * std_err, samples: n }
    }

    pub fn from_samples(xs: &[f64], confidence: f64) -> Self {
        let sum: f64 = xs.iter().sum();
        let sum_sq: f64 = xs.iter().map(|x| x * x).sum();
        MeanEstimate::from_moments(sum, sum_sq, xs.len() as u64, confidence)
    }
}

/// Ordinary least squares `y = slope * x + intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = xs.iter().zip(ys).map(|(x, y)| y - (slope * x + intercept)).collect();
    Some(LinearFit { slope, intercept, residuals })
}
