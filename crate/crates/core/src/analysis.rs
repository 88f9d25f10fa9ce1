//! Post-hoc statistics: power-law scaling fits and aggregate summaries
//! of learning outcomes.

use crate::es::LearnOutcome;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Least-squares fit of infidelity = α · c_total^(−β) in log10 space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub alpha: f64,
    pub beta: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Ordinary least squares on (log10 c_total, log10 infidelity); the
/// fitted slope is −β and the intercept is log10 α.
pub fn fit_scaling(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 2 {
        return Err(Error::EmptyInput("scaling fit needs at least 2 points".into()));
    }
    for (c, f) in points {
        if *c <= 0.0 || *f <= 0.0 {
            return Err(Error::OutOfRange(format!(
                "scaling fit requires positive points, got ({c}, {f})"
            )));
        }
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(c, _)| c.log10()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, f)| f.log10()).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (y - y_mean);
    }
    if sxx == 0.0 {
        return Err(Error::OutOfRange(
            "scaling fit undefined for a single distinct c_total".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let pred = intercept + slope * x;
        ss_res += (y - pred) * (y - pred);
        ss_tot += (y - y_mean) * (y - y_mean);
    }
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(ScalingFit {
        alpha: 10f64.powf(intercept),
        beta: -slope,
        r_squared,
        n_points: points.len(),
    })
}

/// Aggregate statistics over a series of learning outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean_c_total: f64,
    pub stderr_c_total: f64,
    pub mean_infidelity: f64,
    pub stderr_infidelity: f64,
    pub halt_fraction: f64,
    pub mean_t_h: f64,
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn summarize(outcomes: &[LearnOutcome]) -> Result<Summary> {
    if outcomes.is_empty() {
        return Err(Error::EmptyInput("summary of zero outcomes".into()));
    }
    let c: Vec<f64> = outcomes.iter().map(|o| o.c_total as f64).collect();
    let inf: Vec<f64> = outcomes.iter().map(|o| o.infidelity).collect();
    let t_h: Vec<f64> = outcomes.iter().map(|o| o.t_h as f64).collect();
    let (mean_c_total, stderr_c_total) = mean_stderr(&c);
    let (mean_infidelity, stderr_infidelity) = mean_stderr(&inf);
    let halted = outcomes.iter().filter(|o| o.halted).count();
    Ok(Summary {
        n: outcomes.len(),
        mean_c_total,
        stderr_c_total,
        mean_infidelity,
        stderr_infidelity,
        halt_fraction: halted as f64 / outcomes.len() as f64,
        mean_t_h: t_h.iter().sum::<f64>() / t_h.len() as f64,
    })
}

/// Measurement-cost saving of a series against a baseline:
/// baseline mean 𝒞_total minus this series' mean.
pub fn delta_c_total(series: &Summary, baseline: &Summary) -> f64 {
    baseline.mean_c_total - series.mean_c_total
}
