//! Synchronization and estimation error functionals, all evaluated in
//! coefficient space through Parseval's relation.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{two_sided_power, ModelParams, SpectralCoefficients};

/// Time-indexed record of a synchronization or filtering run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub times: Vec<f64>,
    pub normalized_mse: Vec<f64>,
    pub cost: Vec<f64>,
    pub theta_hat: Vec<ModelParams>,
    pub param_sq_err: Vec<[f64; 3]>,
}

impl RunTrace {
    pub fn push(
        &mut self,
        t: f64,
        normalized_mse: f64,
        cost: f64,
        theta_hat: ModelParams,
        param_sq_err: [f64; 3],
    ) {
        self.times.push(t);
        self.normalized_mse.push(normalized_mse);
        self.cost.push(cost);
        self.theta_hat.push(theta_hat);
        self.param_sq_err.push(param_sq_err);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Value of `normalized_mse` at the stored time closest to `t`.
    pub fn e2_at(&self, t: f64) -> Option<f64> {
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))?
            .0;
        Some(self.normalized_mse[i])
    }

    pub fn last_theta(&self) -> Option<ModelParams> {
        self.theta_hat.last().copied()
    }
}

/// `e_k = a_k - b_k`, with each side read as zero above its own order.
/// The result has the larger of the two orders.
pub fn error_coeffs(a_master: &SpectralCoefficients, b_slave: &SpectralCoefficients) -> SpectralCoefficients {
    let order = a_master.order().max(b_slave.order());
    let zero = Complex64::new(0.0, 0.0);
    let a = a_master.as_slice();
    let b = b_slave.as_slice();
    let e = (0..=order)
        .map(|k| a.get(k).copied().unwrap_or(zero) - b.get(k).copied().unwrap_or(zero))
        .collect();
    SpectralCoefficients::from_vec_projected(e)
}

/// Error-field power over master-field power.
pub fn normalized_mse(e: &SpectralCoefficients, a_master: &SpectralCoefficients) -> Result<f64> {
    let p = a_master.power();
    if !(p > 0.0) {
        return Err(Error::InvalidNormalization("master field has zero power"));
    }
    Ok(e.power() / p)
}

/// `C = sum_{k=0}^{K} |e_k|^2` over the one-sided coefficients.
pub fn cost_c(e: &SpectralCoefficients) -> f64 {
    e.as_slice().iter().map(|z| z.norm_sqr()).sum()
}

/// Mean error power `(1/X) int E^2 dx`.
pub fn error_power(e: &SpectralCoefficients) -> f64 {
    two_sided_power(e.as_slice())
}

/// `(theta_hat_i - theta_i)^2`, divided by `theta_i^2` when `normalized`.
pub fn param_sq_err(theta_hat: ModelParams, theta: ModelParams, normalized: bool) -> Result<[f64; 3]> {
    let est = theta_hat.to_array();
    let truth = theta.to_array();
    let mut out = [0.0; 3];
    for i in 0..3 {
        let d = est[i] - truth[i];
        out[i] = if normalized {
            if truth[i] == 0.0 {
                return Err(Error::InvalidNormalization("true parameter is zero"));
            }
            (d / truth[i]).powi(2)
        } else {
            d * d
        };
    }
    Ok(out)
}

/// Trapezoid average of `series` over the last `fraction` of the time span.
/// The cut point is linearly interpolated when it falls between samples.
pub fn tail_average(series: &[f64], times: &[f64], fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::config(format!("tail fraction must be in (0, 1], got {fraction}")));
    }
    if series.len() != times.len() || series.is_empty() {
        return Err(Error::config("series and times must be non-empty and of equal length"));
    }
    let n = series.len();
    if n == 1 {
        return Ok(series[0]);
    }
    let t0 = times[0];
    let t1 = times[n - 1];
    let cut = t1 - fraction * (t1 - t0);
    if !(t1 > t0) {
        return Ok(series[n - 1]);
    }
    // first index with times[i] > cut
    let start = times.partition_point(|&t| t <= cut);
    let mut area = 0.0;
    let mut prev_t = cut;
    let mut prev_v = if start == 0 {
        series[0]
    } else {
        let (ta, tb) = (times[start - 1], times[start]);
        let w = (cut - ta) / (tb - ta);
        series[start - 1] + w * (series[start] - series[start - 1])
    };
    for i in start..n {
        area += 0.5 * (prev_v + series[i]) * (times[i] - prev_t);
        prev_t = times[i];
        prev_v = series[i];
    }
    Ok(area / (t1 - cut))
}
