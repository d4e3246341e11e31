//! Monte Carlo error estimates and convergence-order regression.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Result, StudyError};

/// Root-mean-square error and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MsError {
    pub error: f64,
    pub std: f64,
}

/// `error = sqrt(mean(e²))`; `std` propagates the standard error of the
/// mean of `e²` through the square root (delta method).
pub fn estimate_ms_error(sq_errors: &[f64]) -> Result<MsError> {
    let p = sq_errors.len();
    if p < 2 {
        return Err(StudyError::Insufficient(format!("need at least 2 samples, got {p}")));
    }
    if sq_errors.iter().any(|e| !e.is_finite() || *e < 0.0) {
        return Err(StudyError::Invariant("squared errors must be finite and non-negative".into()));
    }
    let n = p as f64;
    let mean = sq_errors.iter().sum::<f64>() / n;
    let var = sq_errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0);
    let error = mean.sqrt();
    let std = if error > 0.0 { var.sqrt() / (2.0 * error * n.sqrt()) } else { 0.0 };
    Ok(MsError { error, std })
}

/// Least-squares fit of `log(error)` against `log(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// Two-sided 95% confidence interval from the regression residuals.
    pub ci_low: f64,
    pub ci_high: f64,
    pub points: usize,
}

pub fn fit_order(points: &[(f64, f64)]) -> Result<OrderFit> {
    let n = points.len();
    if n < 3 {
        return Err(StudyError::Insufficient(format!("need at least 3 resolutions, got {n}")));
    }
    if points.iter().any(|(x, e)| !(*x > 0.0 && *e > 0.0 && x.is_finite() && e.is_finite())) {
        return Err(StudyError::Insufficient("log-log fit needs positive finite values".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, e)| (x.ln(), e.ln())).collect();
    let nf = n as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx <= f64::EPSILON * nf * mx.abs().max(1.0) {
        return Err(StudyError::Insufficient("degenerate ladder: all abscissae equal".into()));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = logs.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let slope_stderr = (ssr / (nf - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, nf - 2.0)
        .map_err(|e| StudyError::Insufficient(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(OrderFit {
        slope,
        intercept,
        slope_stderr,
        ci_low: slope - t * slope_stderr,
        ci_high: slope + t * slope_stderr,
        points: n,
    })
}
