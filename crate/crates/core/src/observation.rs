//! Grid sampling of the master field, additive Gaussian noise and
//! least-squares recovery of truncated Fourier coefficients.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spectral::SpectralCoefficients;

/// Precomputed `exp(i w0 k x_j)` for `k = 1 ..= order` on a fixed grid.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    grid: Vec<f64>,
    order: usize,
    phases: Vec<Complex64>,
}

impl FieldSampler {
    pub fn new(grid: &[f64], x_period: f64, order: usize) -> Self {
        let omega0 = 2.0 * PI / x_period;
        let mut phases = Vec::with_capacity(grid.len() * order);
        for &x in grid {
            for k in 1..=order {
                phases.push(Complex64::from_polar(1.0, omega0 * k as f64 * x));
            }
        }
        Self {
            grid: grid.to_vec(),
            order,
            phases,
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Field values on the grid; `c` may have any order up to the sampler's.
    pub fn sample_into(&self, c: &SpectralCoefficients, out: &mut [f64]) {
        let c = c.as_slice();
        assert!(c.len() <= self.order + 1, "sampler order too small");
        assert_eq!(out.len(), self.grid.len());
        let mean = c[0].re;
        for (j, u) in out.iter_mut().enumerate() {
            let row = &self.phases[j * self.order..(j + 1) * self.order];
            let mut acc = 0.0;
            for (z, p) in c[1..].iter().zip(row) {
                acc += z.re * p.re - z.im * p.im;
            }
            *u = mean + 2.0 * acc;
        }
    }

    pub fn sample(&self, c: &SpectralCoefficients) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        self.sample_into(c, &mut out);
        out
    }
}

/// Design matrix and precomputed least-squares operator for one grid and fit order.
#[derive(Debug, Clone)]
pub struct ObservationSetup {
    grid: Vec<f64>,
    x_period: f64,
    order: usize,
    design: DMatrix<Complex64>,
    ls_operator: DMatrix<Complex64>,
    // ls_operator in row-major order for the per-step products
    ls_rows: Vec<Complex64>,
}

/// Builds `Phi` (columns `phi_{-K} .. phi_0 .. phi_K`) and `(Phi^H Phi)^{-1} Phi^H`.
pub fn build_setup(grid: &[f64], k_fit: usize, x_period: f64) -> Result<ObservationSetup> {
    let j = grid.len();
    let cols = 2 * k_fit + 1;
    if j < cols {
        return Err(Error::config(format!(
            "grid has J = {j} points but a fit of order {k_fit} needs J >= 2K+1 = {cols}"
        )));
    }
    if let Some(x) = grid
        .iter()
        .find(|x| !(x.is_finite() && **x >= 0.0 && **x < x_period))
    {
        return Err(Error::config(format!("grid point {x} outside [0, {x_period})")));
    }
    let omega0 = 2.0 * PI / x_period;
    let design = DMatrix::from_fn(j, cols, |r, m| {
        let k = m as f64 - k_fit as f64;
        Complex64::from_polar(1.0, omega0 * k * grid[r])
    });
    let adjoint = design.adjoint();
    let normal = &adjoint * &design;
    let chol = normal
        .cholesky()
        .ok_or_else(|| Error::DegenerateGrid("normal matrix is not positive definite".into()))?;
    let ls_operator = chol.solve(&adjoint);

    let residual = (&ls_operator * &design - DMatrix::<Complex64>::identity(cols, cols))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if !(residual < 1e-8) {
        return Err(Error::DegenerateGrid(format!(
            "least-squares operator is not a left inverse (residual {residual:e})"
        )));
    }

    let mut ls_rows = Vec::with_capacity(cols * j);
    for r in 0..cols {
        ls_rows.extend(ls_operator.row(r).iter().copied());
    }
    Ok(ObservationSetup {
        grid: grid.to_vec(),
        x_period,
        order: k_fit,
        design,
        ls_operator,
        ls_rows,
    })
}

impl ObservationSetup {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn x_period(&self) -> f64 {
        self.x_period
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn design(&self) -> &DMatrix<Complex64> {
        &self.design
    }

    pub fn ls_operator(&self) -> &DMatrix<Complex64> {
        &self.ls_operator
    }

    /// Raw LS solution `[a_{-K} .. a_0 .. a_K]`.
    pub fn ls_fit_two_sided(&self, u: &[f64]) -> Vec<Complex64> {
        assert_eq!(u.len(), self.grid.len(), "observation length must equal J");
        let j = u.len();
        self.ls_rows
            .chunks_exact(j)
            .map(|row| {
                let (mut re, mut im) = (0.0, 0.0);
                for (z, v) in row.iter().zip(u) {
                    re += z.re * v;
                    im += z.im * v;
                }
                Complex64::new(re, im)
            })
            .collect()
    }

    /// One-sided LS estimate; the `k` and `-k` entries are averaged so the
    /// result is a valid Hermitian representation even under noise.
    pub fn ls_fit(&self, u: &[f64]) -> SpectralCoefficients {
        let two = self.ls_fit_two_sided(u);
        let k_fit = self.order;
        let mut out = Vec::with_capacity(k_fit + 1);
        out.push(Complex64::new(two[k_fit].re, 0.0));
        for k in 1..=k_fit {
            out.push((two[k_fit + k] + two[k_fit - k].conj()) * 0.5);
        }
        SpectralCoefficients::from_vec_projected(out)
    }
}

pub fn ls_fit(setup: &ObservationSetup, u: &[f64]) -> SpectralCoefficients {
    setup.ls_fit(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum NoiseMode {
    #[default]
    Off,
    /// Per-sample standard deviation.
    FixedSigma(f64),
    /// Target signal-to-noise ratio in dB against the mean master power.
    TargetSnr(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseConfig {
    pub mode: NoiseMode,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn off() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            NoiseMode::FixedSigma(s) if !(s >= 0.0 && s.is_finite()) => {
                Err(Error::config(format!("noise sigma must be >= 0, got {s}")))
            }
            NoiseMode::TargetSnr(db) if !db.is_finite() => {
                Err(Error::config("snr_db must be finite"))
            }
            _ => Ok(()),
        }
    }

    /// Standard deviation to use given the mean signal power.
    pub fn sigma(&self, signal_power: f64) -> f64 {
        match self.mode {
            NoiseMode::Off => 0.0,
            NoiseMode::FixedSigma(s) => s,
            NoiseMode::TargetSnr(db) => calibrate_sigma(signal_power, db),
        }
    }
}

/// `sqrt(P / 10^(snr_db / 10))`.
pub fn calibrate_sigma(trajectory_power: f64, snr_db: f64) -> f64 {
    (trajectory_power / 10f64.powf(snr_db / 10.0)).sqrt()
}

/// Grid samples of the master field plus i.i.d. `N(0, sigma^2)` noise.
pub fn observe<R: Rng + ?Sized>(
    c_master: &SpectralCoefficients,
    sampler: &FieldSampler,
    sigma: f64,
    rng: &mut R,
) -> Vec<f64> {
    let mut u = sampler.sample(c_master);
    add_noise(&mut u, sigma, rng);
    u
}

pub(crate) fn add_noise<R: Rng + ?Sized>(u: &mut [f64], sigma: f64, rng: &mut R) {
    if sigma > 0.0 {
        for v in u.iter_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *v += sigma * n;
        }
    }
}
