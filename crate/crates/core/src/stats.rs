//! Small statistics helpers shared by the ensemble and diffusion modules.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Sample mean and standard error of the mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

pub fn mean_stderr(xs: &[f64]) -> MeanStderr {
    let n = xs.len();
    if n == 0 {
        return MeanStderr::default();
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        f64::NAN
    };
    MeanStderr {
        mean,
        stderr,
        count: n,
    }
}

/// Least-squares line `y = intercept + slope x` with standard errors
/// derived from the residual scatter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_stderr = if x.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    LineFit {
        slope,
        intercept,
        slope_stderr,
    }
}

/// Weighted fit of `y = slope x` through the origin; returns the slope and
/// its standard error given per-point standard deviations `sigma`.
pub fn fit_through_origin(x: &[f64], y: &[f64], sigma: &[f64]) -> (f64, f64) {
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for ((a, b), s) in x.iter().zip(y).zip(sigma) {
        let w = 1.0 / (s * s);
        sxx += w * a * a;
        sxy += w * a * b;
    }
    (sxy / sxx, (1.0 / sxx).sqrt())
}

/// Least-squares slope of `log y` against `log x` (empirical order).
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly).slope
}

/// Pearson χ² goodness-of-fit test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl ChiSquareTest {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value >= level
    }
}

/// `observed` counts against `expected` counts (same total); `fitted`
/// parameters reduce the degrees of freedom.
pub fn chi_square(observed: &[usize], expected: &[f64], fitted: usize) -> ChiSquareTest {
    let statistic: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    let dof = observed.len().saturating_sub(1 + fitted).max(1);
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    ChiSquareTest {
        statistic,
        dof,
        p_value: 1.0 - dist.cdf(statistic),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = fit_line(&x, &y);
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 2.0).abs() < 1e-14);
        assert!(f.slope_stderr < 1e-12);
    }

    #[test]
    fn order_estimate() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        assert!((log_log_slope(&h, &e) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_perfect_fit() {
        let t = chi_square(&[10, 10, 10], &[10.0, 10.0, 10.0], 0);
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.dof, 2);
        assert!((t.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        let m = mean_stderr(&[2.0; 5]);
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.stderr, 0.0);
    }
}
