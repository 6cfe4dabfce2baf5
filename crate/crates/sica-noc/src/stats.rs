//! Small Monte-Carlo and regression helpers shared across modules.

use serde::Serialize;

/// A Monte-Carlo estimate: sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    /// Sample mean.
    pub mean: f64,
    /// Standard error of the mean (zero for a single sample).
    pub stderr: f64,
    /// Number of samples behind the estimate.
    pub n_samples: usize,
}

impl Estimate {
    /// Mean and standard error of `samples`, summed in slice order so the
    /// result is independent of any parallel schedule upstream.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                mean: 0.0,
                stderr: 0.0,
                n_samples: 0,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self {
                mean,
                stderr: 0.0,
                n_samples: 1,
            };
        }
        let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
        let variance = ss / (n - 1) as f64;
        Self {
            mean,
            stderr: (variance / n as f64).sqrt(),
            n_samples: n,
        }
    }
}

/// Ordinary least squares fit `y ~ intercept + slope * x`.
///
/// Returns `(slope, intercept, r_squared)`. With fewer than two points or a
/// degenerate abscissa the slope is zero and `r_squared` is zero. A constant
/// response short-circuits to an exactly zero slope rather than picking up
/// rounding noise from the centering step.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len(), "mismatched regression inputs");
    let n = x.len();
    if n < 2 {
        let intercept = y.first().copied().unwrap_or(0.0);
        return (0.0, intercept, 0.0);
    }
    if y.iter().all(|&v| v == y[0]) {
        return (0.0, y[0], 1.0);
    }
    let nf = n as f64;
    let mean_x = x.iter().sum::<f64>() / nf;
    let mean_y = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mean_x;
        let dy = yi - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return (0.0, mean_y, 0.0);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}
