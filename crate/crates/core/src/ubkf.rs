//! Cubature Kalman filter over the extended real state
//! `[alpha, beta, gamma, a_0, Re a_1, Im a_1, ..., Re a_K, Im a_K]`.
//!
//! Prediction pushes every cubature point through one Euler step of the
//! master model with that point's own parameters. The grid measurement is
//! linear in the coefficients, so the update is an ordinary Kalman update.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::master::{MasterModel, DIVERGENCE_THRESHOLD};
use crate::metrics::{error_coeffs, normalized_mse, param_sq_err, RunTrace};
use crate::observation::ObservationSetup;
use crate::spectral::{DomainConfig, ModelParams, SpectralCoefficients};

const JITTER: f64 = 1e-12;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Tuning knobs of the baseline filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UbkfConfig {
    pub process_noise_coeff: f64,
    pub process_noise_theta: f64,
    pub prior_var: f64,
    pub theta_prior: ModelParams,
    /// Drops the quadratic term from the propagation model.
    pub linear_only: bool,
}

impl Default for UbkfConfig {
    fn default() -> Self {
        Self {
            process_noise_coeff: 1e-6,
            process_noise_theta: 1e-8,
            prior_var: 1e-2,
            theta_prior: ModelParams::new(0.05, 0.05, 0.05),
            linear_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Diagonal of the process noise intensity.
    pub process_noise: DVector<f64>,
    pub measurement_noise_var: f64,
}

/// Real state dimension `3 + 1 + 2K`.
pub fn state_dim(order: usize) -> usize {
    4 + 2 * order
}

pub fn encode(theta: ModelParams, a: &SpectralCoefficients) -> DVector<f64> {
    let c = a.as_slice();
    let mut v = DVector::zeros(state_dim(a.order()));
    v[0] = theta.alpha;
    v[1] = theta.beta;
    v[2] = theta.gamma;
    v[3] = c[0].re;
    for k in 1..c.len() {
        v[2 + 2 * k] = c[k].re;
        v[3 + 2 * k] = c[k].im;
    }
    v
}

pub fn decode(v: &DVector<f64>) -> (ModelParams, SpectralCoefficients) {
    let order = (v.len() - 4) / 2;
    let theta = ModelParams::new(v[0], v[1], v[2]);
    let mut c = vec![Complex64::new(v[3], 0.0)];
    c.extend((1..=order).map(|k| Complex64::new(v[2 + 2 * k], v[3 + 2 * k])));
    (theta, SpectralCoefficients::from_vec_projected(c))
}

impl FilterState {
    /// Diagonal prior around `(theta_prior, a_prior)`.
    pub fn new(a_prior: &SpectralCoefficients, measurement_noise_var: f64, cfg: &UbkfConfig) -> Result<Self> {
        if !(measurement_noise_var > 0.0 && measurement_noise_var.is_finite()) {
            return Err(Error::config("measurement noise variance must be > 0"));
        }
        if !(cfg.prior_var >= 0.0 && cfg.process_noise_coeff >= 0.0 && cfg.process_noise_theta >= 0.0) {
            return Err(Error::config("filter variances must be >= 0"));
        }
        let n = state_dim(a_prior.order());
        let process_noise = DVector::from_fn(n, |i, _| {
            if i < 3 {
                cfg.process_noise_theta
            } else {
                cfg.process_noise_coeff
            }
        });
        Ok(Self {
            mean: encode(cfg.theta_prior, a_prior),
            covariance: DMatrix::from_diagonal_element(n, n, cfg.prior_var),
            process_noise,
            measurement_noise_var,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn order(&self) -> usize {
        (self.dim() - 4) / 2
    }

    pub fn theta(&self) -> ModelParams {
        ModelParams::new(self.mean[0], self.mean[1], self.mean[2])
    }

    pub fn coeffs(&self) -> SpectralCoefficients {
        decode(&self.mean).1
    }
}

fn lower_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = cov.clone().cholesky() {
        return Ok(ch.l());
    }
    let n = cov.nrows();
    let repaired = cov + DMatrix::from_diagonal_element(n, n, JITTER);
    repaired
        .cholesky()
        .map(|ch| ch.l())
        .ok_or_else(|| Error::CovarianceCollapse(format!("{n}x{n} covariance is not positive definite")))
}

/// Degree-3 spherical-radial point set: `mean +/- sqrt(n) L e_i`, weights `1/(2n)`.
pub fn cubature_points(mean: &DVector<f64>, covariance: &DMatrix<f64>) -> Result<(Vec<DVector<f64>>, Vec<f64>)> {
    let n = mean.len();
    let l = lower_factor(covariance)? * (n as f64).sqrt();
    let mut pts = Vec::with_capacity(2 * n);
    for i in 0..n {
        pts.push(mean + l.column(i));
    }
    for i in 0..n {
        pts.push(mean - l.column(i));
    }
    Ok((pts, vec![0.5 / n as f64; 2 * n]))
}

/// Real `J x n` map from the embedded state to grid values:
/// `u_j = a_0 + sum_k 2 (Re a_k cos(w0 k x_j) - Im a_k sin(w0 k x_j))`.
pub fn measurement_matrix(grid: &[f64], x_period: f64, order: usize) -> DMatrix<f64> {
    let w0 = 2.0 * std::f64::consts::PI / x_period;
    DMatrix::from_fn(grid.len(), state_dim(order), |j, i| match i {
        0..=2 => 0.0,
        3 => 1.0,
        _ => {
            let k = ((i - 2) / 2) as f64;
            let ph = w0 * k * grid[j];
            if i % 2 == 0 {
                2.0 * ph.cos()
            } else {
                -2.0 * ph.sin()
            }
        }
    })
}

fn symmetrize(p: &mut DMatrix<f64>) {
    let t = p.transpose();
    *p += t;
    *p *= 0.5;
}

/// Stateful filter bound to one grid and domain.
#[derive(Debug, Clone)]
pub struct UbkfFilter {
    state: FilterState,
    h_mat: DMatrix<f64>,
    omega0: f64,
    h: f64,
    linear_only: bool,
    step_index: usize,
}

impl UbkfFilter {
    pub fn new(state: FilterState, setup: &ObservationSetup, cfg: &DomainConfig, linear_only: bool) -> Self {
        let h_mat = measurement_matrix(setup.grid(), setup.x_period(), state.order());
        Self {
            state,
            h_mat,
            omega0: cfg.omega0,
            h: cfg.h,
            linear_only,
            step_index: 0,
        }
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    pub fn into_state(self) -> FilterState {
        self.state
    }

    fn propagate(&self, x: &DVector<f64>) -> DVector<f64> {
        let (theta, a) = decode(x);
        let mut model = MasterModel::new(theta, self.omega0, a.order());
        if self.linear_only {
            model = model.linear_only();
        }
        let mut rhs = vec![ZERO; a.order() + 1];
        model.rhs_into(a.as_slice(), &mut rhs);
        let mut next = x.clone();
        next[3] += self.h * rhs[0].re;
        for k in 1..rhs.len() {
            next[2 + 2 * k] += self.h * rhs[k].re;
            next[3 + 2 * k] += self.h * rhs[k].im;
        }
        next
    }

    /// Predict through one Euler step, then update on `u_obs`.
    pub fn step(&mut self, u_obs: &[f64]) -> Result<()> {
        assert_eq!(u_obs.len(), self.h_mat.nrows(), "observation length must equal grid size");
        let n = self.state.dim();
        let (pts, w) = cubature_points(&self.state.mean, &self.state.covariance)?;
        let prop: Vec<DVector<f64>> = pts.iter().map(|p| self.propagate(p)).collect();

        let mut mean = DVector::zeros(n);
        for (p, wi) in prop.iter().zip(&w) {
            mean.axpy(*wi, p, 1.0);
        }
        let mut cov = DMatrix::from_diagonal(&(&self.state.process_noise * self.h));
        for (p, wi) in prop.iter().zip(&w) {
            let d = p - &mean;
            cov.ger(*wi, &d, &d, 1.0);
        }

        let hm = &self.h_mat;
        let ph_t = &cov * hm.transpose();
        let mut s = hm * &ph_t;
        for j in 0..s.nrows() {
            s[(j, j)] += self.state.measurement_noise_var;
        }
        let s_chol = s
            .cholesky()
            .ok_or_else(|| Error::CovarianceCollapse("innovation covariance is not positive definite".into()))?;
        // gain^T = S^{-1} (P H^T)^T
        let gain = s_chol.solve(&ph_t.transpose()).transpose();
        let innov = DVector::from_column_slice(u_obs) - hm * &mean;
        mean += &gain * innov;
        cov -= &gain * ph_t.transpose();
        symmetrize(&mut cov);

        self.step_index += 1;
        let mag = mean.amax();
        if !mag.is_finite() || mag > DIVERGENCE_THRESHOLD {
            return Err(Error::Divergence {
                step: self.step_index,
                time: self.step_index as f64 * self.h,
                magnitude: mag,
            });
        }
        self.state.mean = mean;
        self.state.covariance = cov;
        Ok(())
    }
}

/// Value-semantics wrapper around [`UbkfFilter::step`].
pub fn ubkf_step(
    state: &FilterState,
    u_obs: &[f64],
    setup: &ObservationSetup,
    cfg: &DomainConfig,
) -> Result<FilterState> {
    let mut f = UbkfFilter::new(state.clone(), setup, cfg, false);
    f.step(u_obs)?;
    Ok(f.into_state())
}

/// One element of the observation stream fed to [`run_ubkf`].
#[derive(Debug, Clone, Copy)]
pub struct UbkfSample<'a> {
    pub t: f64,
    pub u_obs: &'a [f64],
    /// Master coefficients at `t`, used only for the error trace.
    pub a_true: &'a SpectralCoefficients,
}

/// Runs the filter over `observations`, recording the decoded mean after
/// each update. Parameter errors are raw squared errors against `theta_true`.
pub fn run_ubkf<'a, I>(
    init: FilterState,
    observations: I,
    setup: &ObservationSetup,
    cfg: &DomainConfig,
    theta_true: ModelParams,
    linear_only: bool,
) -> Result<(FilterState, RunTrace)>
where
    I: IntoIterator<Item = UbkfSample<'a>>,
{
    let mut filter = UbkfFilter::new(init, setup, cfg, linear_only);
    let mut trace = RunTrace::default();
    for obs in observations {
        filter.step(obs.u_obs)?;
        let (theta, b) = decode(&filter.state.mean);
        let e = error_coeffs(obs.a_true, &b);
        let e2 = normalized_mse(&e, obs.a_true).unwrap_or(f64::NAN);
        let cost = crate::metrics::cost_c(&e);
        trace.push(obs.t, e2, cost, theta, param_sq_err(theta, theta_true, false)?);
    }
    Ok((filter.into_state(), trace))
}
