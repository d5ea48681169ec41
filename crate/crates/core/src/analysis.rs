//! Post-processing of trajectories: extinction times, the discounted process
//! `M(t) = e^{−C*(1−α)t} |X(t)|_{-1}^{1−α}`, and absorption at zero.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::stepper::Trajectory;

/// Smallest ensemble accepted by [`ensemble_supermartingale_test`].
pub const MIN_SUPERMARTINGALE_PATHS: usize = 100;

/// First recorded time with `|X|_{-1} ≤ eps`.
pub fn detect_extinction(traj: &Trajectory, eps: f64) -> Option<f64> {
    traj.hm1_norms.iter().position(|&v| v <= eps).map(|i| traj.times[i])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupermartingaleSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub c_star: f64,
    pub alpha: f64,
}

impl SupermartingaleSeries {
    /// Value at the last sample not after `t`.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let slack = 1e-9 * t.abs().max(1e-12);
        self.times.iter().rposition(|&s| s <= t + slack).map(|i| self.values[i])
    }
}

pub fn supermartingale_series(traj: &Trajectory, c_star: f64, alpha: f64) -> Result<SupermartingaleSeries> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if !(c_star >= 0.0) {
        return Err(invalid(format!("C* must be nonnegative, got {c_star}")));
    }
    let rate = c_star * (1.0 - alpha);
    let values = traj
        .times
        .iter()
        .zip(&traj.hm1_norms)
        .map(|(&t, &n)| (-rate * t).exp() * n.powf(1.0 - alpha))
        .collect();
    Ok(SupermartingaleSeries {
        times: traj.times.clone(),
        values,
        c_star,
        alpha,
    })
}

/// After the first recorded time with `|X|_{-1} ≤ eps`, every later norm is
/// exactly zero. Vacuously true for paths that never get there.
pub fn check_absorption(traj: &Trajectory, eps: f64) -> bool {
    match traj.hm1_norms.iter().position(|&v| v <= eps) {
        Some(first) => traj.hm1_norms[first + 1..].iter().all(|&v| v == 0.0),
        None => true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointPair {
    pub r: f64,
    pub t: f64,
    pub mean_r: f64,
    pub mean_t: f64,
    pub se_t: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupermartingaleReport {
    pub n_paths: usize,
    pub means: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub pairs: Vec<CheckpointPair>,
    pub pass: bool,
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Tests `E[M(t)] ≤ E[M(r)]` at consecutive checkpoints `r < t` in the form
/// `mean(t) ≤ mean(r) + 2·SE(t)`.
pub fn ensemble_supermartingale_test(
    series: &[SupermartingaleSeries],
    checkpoints: &[f64],
) -> Result<SupermartingaleReport> {
    if series.len() < MIN_SUPERMARTINGALE_PATHS {
        return Err(Error::InsufficientPaths {
            required: MIN_SUPERMARTINGALE_PATHS,
            got: series.len(),
        });
    }
    if checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("checkpoints must be strictly increasing"));
    }
    let mut means = Vec::with_capacity(checkpoints.len());
    let mut ses = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        let samples = series
            .iter()
            .map(|s| {
                s.value_at(t)
                    .ok_or_else(|| invalid(format!("no sample at or before t = {t}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let (m, se) = mean_and_se(&samples);
        means.push(m);
        ses.push(se);
    }
    let pairs: Vec<CheckpointPair> = (1..checkpoints.len())
        .map(|i| CheckpointPair {
            r: checkpoints[i - 1],
            t: checkpoints[i],
            mean_r: means[i - 1],
            mean_t: means[i],
            se_t: ses[i],
            pass: means[i] <= means[i - 1] + 2.0 * ses[i],
        })
        .collect();
    let pass = pairs.iter().all(|p| p.pass);
    Ok(SupermartingaleReport {
        n_paths: series.len(),
        means,
        standard_errors: ses,
        pairs,
        pass,
    })
}
