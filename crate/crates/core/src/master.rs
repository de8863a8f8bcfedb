//! Time evolution of the truncated master system.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{
    linear_diag, steps_for, ConvolutionMethod, Convolver, DomainConfig, ModelParams,
    SpectralCoefficients,
};

/// Coefficient modulus above which a run is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Default burn-in horizon before an experiment proper.
pub const DEFAULT_BURN_IN: f64 = 100.0;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Right-hand side of the truncated KS system with a fixed parameter vector.
#[derive(Debug, Clone)]
pub struct MasterModel {
    omega0: f64,
    diag: Vec<Complex64>,
    convolver: Convolver,
    nonlinear: bool,
    eta: Vec<Complex64>,
}

impl MasterModel {
    pub fn new(theta: ModelParams, omega0: f64, order: usize) -> Self {
        Self::with_method(theta, omega0, order, ConvolutionMethod::Direct)
    }

    pub fn with_method(
        theta: ModelParams,
        omega0: f64,
        order: usize,
        method: ConvolutionMethod,
    ) -> Self {
        Self {
            omega0,
            diag: linear_diag(theta, omega0, order),
            convolver: Convolver::new(order, method),
            nonlinear: true,
            eta: vec![ZERO; order + 1],
        }
    }

    /// Drops the quadratic term, leaving the diagonal linear system.
    pub fn linear_only(mut self) -> Self {
        self.nonlinear = false;
        self
    }

    pub fn order(&self) -> usize {
        self.diag.len() - 1
    }

    pub fn diag(&self) -> &[Complex64] {
        &self.diag
    }

    pub fn rhs_into(&mut self, c: &[Complex64], out: &mut [Complex64]) {
        if self.nonlinear {
            self.convolver.eta_into(c, &mut self.eta);
        } else {
            self.eta.iter_mut().for_each(|z| *z = ZERO);
        }
        let half_iw = Complex64::new(0.0, 0.5 * self.omega0);
        for k in 0..c.len() {
            out[k] = self.diag[k] * c[k] - half_iw * self.eta[k];
        }
        out[0] = ZERO;
    }
}

/// `Psi(theta) c - (i w0 / 2) eta(c)`; entry 0 is exactly zero.
pub fn master_rhs(c: &SpectralCoefficients, theta: ModelParams, omega0: f64) -> Vec<Complex64> {
    let mut model = MasterModel::new(theta, omega0, c.order());
    let mut out = vec![ZERO; c.order() + 1];
    model.rhs_into(c.as_slice(), &mut out);
    out
}

/// `c + h rhs` with the imaginary part of the mean forced to zero.
pub fn euler_step(c: &SpectralCoefficients, rhs: &[Complex64], h: f64) -> SpectralCoefficients {
    let next = c
        .as_slice()
        .iter()
        .zip(rhs)
        .map(|(a, r)| a + r * h)
        .collect();
    SpectralCoefficients::from_vec_projected(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    #[default]
    Euler,
    /// Classical fourth-order Runge-Kutta.
    Rk4,
}

/// Advances a coefficient vector in place, reusing its buffers.
#[derive(Debug, Clone)]
pub struct MasterStepper {
    model: MasterModel,
    h: f64,
    integrator: Integrator,
    k: [Vec<Complex64>; 4],
    tmp: Vec<Complex64>,
}

impl MasterStepper {
    pub fn new(model: MasterModel, h: f64, integrator: Integrator) -> Self {
        let n = model.order() + 1;
        Self {
            model,
            h,
            integrator,
            k: std::array::from_fn(|_| vec![ZERO; n]),
            tmp: vec![ZERO; n],
        }
    }

    pub fn step(&mut self, c: &mut SpectralCoefficients) {
        let h = self.h;
        let c = c.as_mut_slice();
        match self.integrator {
            Integrator::Euler => {
                self.model.rhs_into(c, &mut self.k[0]);
                for (a, r) in c.iter_mut().zip(&self.k[0]) {
                    *a += r * h;
                }
            }
            Integrator::Rk4 => {
                let [k1, k2, k3, k4] = &mut self.k;
                self.model.rhs_into(c, k1);
                for ((t, a), r) in self.tmp.iter_mut().zip(c.iter()).zip(k1.iter()) {
                    *t = a + r * (0.5 * h);
                }
                self.model.rhs_into(&self.tmp, k2);
                for ((t, a), r) in self.tmp.iter_mut().zip(c.iter()).zip(k2.iter()) {
                    *t = a + r * (0.5 * h);
                }
                self.model.rhs_into(&self.tmp, k3);
                for ((t, a), r) in self.tmp.iter_mut().zip(c.iter()).zip(k3.iter()) {
                    *t = a + r * h;
                }
                self.model.rhs_into(&self.tmp, k4);
                for i in 0..c.len() {
                    c[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
                }
            }
        }
        c[0].im = 0.0;
    }
}

/// Fails when `h |Re Psi_kk| >= 2` for some retained mode, i.e. when the
/// explicit step cannot be stable for the linear part.
pub fn check_stability(theta: ModelParams, cfg: &DomainConfig) -> Result<()> {
    let diag = linear_diag(theta, cfg.omega0, cfg.order);
    if let Some((k, d)) = diag
        .iter()
        .enumerate()
        .find(|(_, d)| cfg.h * d.re.abs() >= 2.0)
    {
        return Err(Error::config(format!(
            "explicit step unstable: h |Re Psi_kk| = {:.3} >= 2 at k = {k} (K = {}, h = {})",
            cfg.h * d.re.abs(),
            cfg.order,
            cfg.h
        )));
    }
    Ok(())
}

pub(crate) fn check_divergence(c: &SpectralCoefficients, step: usize, h: f64) -> Result<()> {
    let m = c.max_abs();
    if !m.is_finite() || m > DIVERGENCE_THRESHOLD {
        return Err(Error::Divergence {
            step,
            time: step as f64 * h,
            magnitude: m,
        });
    }
    Ok(())
}

/// Integrates from the canonical seed (`c_1 = 0.5`) for `burn_t` time units
/// and returns the terminal state.
pub fn burn_in_init(
    theta: ModelParams,
    cfg: &DomainConfig,
    burn_t: f64,
) -> Result<SpectralCoefficients> {
    if !(burn_t >= 0.0 && burn_t.is_finite()) {
        return Err(Error::config(format!("burn_T must be >= 0, got {burn_t}")));
    }
    check_stability(theta, cfg)?;
    let mut c = SpectralCoefficients::canonical_seed(cfg.order);
    let mut stepper = MasterStepper::new(
        MasterModel::new(theta, cfg.omega0, cfg.order),
        cfg.h,
        Integrator::Euler,
    );
    for step in 1..=steps_for(burn_t, cfg.h) {
        stepper.step(&mut c);
        check_divergence(&c, step, cfg.h)?;
    }
    Ok(c)
}

/// Stored snapshots of a master run.
#[derive(Debug, Clone)]
pub struct MasterTrajectory {
    pub times: Vec<f64>,
    pub coeffs: Vec<SpectralCoefficients>,
    pub store_stride: usize,
}

impl MasterTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Mean field power averaged over the stored snapshots.
    pub fn mean_power(&self) -> f64 {
        self.coeffs.iter().map(|c| c.power()).sum::<f64>() / self.coeffs.len() as f64
    }
}

/// Euler run of `floor(T / h)` steps from `c0`, stored every `store_stride`
/// steps. The first (t = 0) and last step are always stored, so the final gap
/// may be shorter than the stride.
pub fn simulate_master(
    c0: &SpectralCoefficients,
    theta: ModelParams,
    cfg: &DomainConfig,
    store_stride: usize,
) -> Result<MasterTrajectory> {
    simulate_master_with(c0, theta, cfg, store_stride, Integrator::Euler)
}

pub fn simulate_master_with(
    c0: &SpectralCoefficients,
    theta: ModelParams,
    cfg: &DomainConfig,
    store_stride: usize,
    integrator: Integrator,
) -> Result<MasterTrajectory> {
    if store_stride == 0 {
        return Err(Error::config("store_stride must be >= 1"));
    }
    if c0.order() != cfg.order {
        return Err(Error::config(format!(
            "initial state has order {} but the domain has K = {}",
            c0.order(),
            cfg.order
        )));
    }
    check_stability(theta, cfg)?;
    let steps = cfg.steps();
    let mut stepper = MasterStepper::new(
        MasterModel::new(theta, cfg.omega0, cfg.order),
        cfg.h,
        integrator,
    );
    let mut c = c0.clone();
    let mut times = vec![0.0];
    let mut coeffs = vec![c.clone()];
    for step in 1..=steps {
        stepper.step(&mut c);
        check_divergence(&c, step, cfg.h)?;
        if step % store_stride == 0 || step == steps {
            times.push(step as f64 * cfg.h);
            coeffs.push(c.clone());
        }
    }
    Ok(MasterTrajectory {
        times,
        coeffs,
        store_stride,
    })
}
