//! The observation-driven slave system.
//!
//! The slave integrates the same truncated KS dynamics as the master plus a
//! diffusive coupling `D (a_hat - b)` towards the least-squares estimate of
//! the observed coefficients. In adaptive mode its parameter vector follows
//!
//! ```text
//! d theta_hat / dt = mu h Re{ M_h [a_hat(t) - b(t-h) - h b'(t-h)] }
//! ```
//!
//! where column `k` of the 3 x (K+1) sensitivity matrix `M_h` is
//! `conj(b_k(t-h)) [w0^2 k^2, -i w0^3 k^3, -w0^4 k^4]^T`. This is steepest
//! descent on the one-step-linearized cost
//! `C~(theta) = || a_hat - b(t-h) - h b'(t-h; theta) ||^2`, whose gradient is
//! `-2 h Re{M_h v}`; the factor 2 is absorbed into `mu`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::master::DIVERGENCE_THRESHOLD;
use crate::spectral::{
    linear_diag, linear_entry, ConvolutionMethod, Convolver, ModelParams, SpectralCoefficients,
};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Coupling `D` in `D (a_hat - b)`.
#[derive(Debug, Clone, PartialEq)]
pub enum CouplingMatrix {
    /// `d I`
    ScalarIdentity(f64),
    /// Full complex (K+1) x (K+1) matrix.
    Dense(DMatrix<Complex64>),
}

impl CouplingMatrix {
    pub fn validate(&self, order: usize) -> Result<()> {
        match self {
            CouplingMatrix::ScalarIdentity(d) if !d.is_finite() => {
                Err(Error::config("coupling constant must be finite"))
            }
            CouplingMatrix::Dense(m) if m.nrows() != order + 1 || m.ncols() != order + 1 => {
                Err(Error::config(format!(
                    "dense coupling must be {0} x {0}, got {1} x {2}",
                    order + 1,
                    m.nrows(),
                    m.ncols()
                )))
            }
            _ => Ok(()),
        }
    }

    /// `out += D (a - b)`.
    fn add_into(&self, a: &[Complex64], b: &[Complex64], out: &mut [Complex64]) {
        match self {
            CouplingMatrix::ScalarIdentity(d) => {
                for k in 0..out.len() {
                    out[k] += (a[k] - b[k]) * *d;
                }
            }
            CouplingMatrix::Dense(m) => {
                for (k, o) in out.iter_mut().enumerate() {
                    let mut acc = ZERO;
                    for j in 0..a.len() {
                        acc += m[(k, j)] * (a[j] - b[j]);
                    }
                    *o += acc;
                }
            }
        }
    }

    pub fn to_dense(&self, order: usize) -> DMatrix<Complex64> {
        match self {
            CouplingMatrix::ScalarIdentity(d) => {
                DMatrix::from_diagonal_element(order + 1, order + 1, Complex64::new(*d, 0.0))
            }
            CouplingMatrix::Dense(m) => m.clone(),
        }
    }
}

/// `Psi(theta) b - (i w0 / 2) eta(b) + D (a_hat - b)`.
pub fn slave_rhs(
    b: &SpectralCoefficients,
    a_hat: &SpectralCoefficients,
    theta: ModelParams,
    coupling: &CouplingMatrix,
    omega0: f64,
) -> Vec<Complex64> {
    assert_eq!(b.order(), a_hat.order(), "slave and estimate orders differ");
    let mut dyn_ = SlaveDynamics::new(omega0, b.order(), ConvolutionMethod::Direct);
    let mut out = vec![ZERO; b.order() + 1];
    dyn_.rhs_into(b.as_slice(), a_hat.as_slice(), theta, coupling, &mut out);
    out
}

/// Precomputed monomials and buffers shared by the slave right-hand sides.
#[derive(Debug, Clone)]
struct SlaveDynamics {
    omega0: f64,
    wk: Vec<f64>,
    // [w0^2 k^2, w0^3 k^3, w0^4 k^4]
    mono: Vec<[f64; 3]>,
    convolver: Convolver,
    eta: Vec<Complex64>,
}

impl SlaveDynamics {
    fn new(omega0: f64, order: usize, method: ConvolutionMethod) -> Self {
        let wk: Vec<f64> = (0..=order).map(|k| omega0 * k as f64).collect();
        let mono = wk.iter().map(|w| [w * w, w * w * w, w * w * w * w]).collect();
        Self {
            omega0,
            wk,
            mono,
            convolver: Convolver::new(order, method),
            eta: vec![ZERO; order + 1],
        }
    }

    fn rhs_into(
        &mut self,
        b: &[Complex64],
        a_hat: &[Complex64],
        theta: ModelParams,
        coupling: &CouplingMatrix,
        out: &mut [Complex64],
    ) {
        self.convolver.eta_into(b, &mut self.eta);
        let half_w = 0.5 * self.omega0;
        for k in 0..b.len() {
            let psi = linear_entry(theta, self.wk[k]);
            let e = self.eta[k];
            // -(i w0/2) eta = (w0/2) (eta.im - i eta.re)
            out[k] = psi * b[k] + Complex64::new(half_w * e.im, -half_w * e.re);
        }
        coupling.add_into(a_hat, b, out);
    }

    /// `Re{M_h v}` with `M_h` built from `b_prev`.
    fn sensitivity_product(&self, b_prev: &[Complex64], v: &[Complex64]) -> [f64; 3] {
        let mut g = [0.0; 3];
        for k in 1..b_prev.len() {
            let p = b_prev[k].conj() * v[k];
            let [w2, w3, w4] = self.mono[k];
            g[0] += w2 * p.re;
            // Re(-i p) = Im(p)
            g[1] += w3 * p.im;
            g[2] -= w4 * p.re;
        }
        g
    }
}

/// Slave coefficients, adaptive parameter estimate and the one-step lag cache.
#[derive(Debug, Clone, PartialEq)]
pub struct SlaveState {
    pub b: SpectralCoefficients,
    pub theta_hat: ModelParams,
    /// `b(t - h)`
    pub b_prev: SpectralCoefficients,
    /// `b'(t - h)`
    pub bdot_prev: Vec<Complex64>,
    pub coupling: CouplingMatrix,
    pub mu: f64,
    pub step_index: usize,
}

impl SlaveState {
    /// Bootstraps the lag cache with `b_prev = b0` and `b'_prev = 0`.
    pub fn new(
        b0: SpectralCoefficients,
        theta_hat: ModelParams,
        coupling: CouplingMatrix,
        mu: f64,
    ) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::config(format!("mu must be >= 0, got {mu}")));
        }
        if !theta_hat.is_finite() {
            return Err(Error::config("initial parameter estimate must be finite"));
        }
        coupling.validate(b0.order())?;
        let n = b0.order() + 1;
        Ok(Self {
            b_prev: b0.clone(),
            b: b0,
            theta_hat,
            bdot_prev: vec![ZERO; n],
            coupling,
            mu,
            step_index: 0,
        })
    }

    pub fn order(&self) -> usize {
        self.b.order()
    }
}

/// `3 x (K+1)` matrix with column `k = conj(b_prev_k) [w0^2 k^2, -i w0^3 k^3, -w0^4 k^4]^T`.
pub fn build_sensitivity(b_prev: &SpectralCoefficients, omega0: f64) -> DMatrix<Complex64> {
    let c = b_prev.as_slice();
    DMatrix::from_fn(3, c.len(), |i, k| {
        let wk = omega0 * k as f64;
        let m = match i {
            0 => Complex64::new(wk.powi(2), 0.0),
            1 => Complex64::new(0.0, -wk.powi(3)),
            _ => Complex64::new(-wk.powi(4), 0.0),
        };
        c[k].conj() * m
    })
}

/// Time derivative of the parameter estimate,
/// `mu h Re{ M_h(b_prev) [a_hat - b_prev - h b'_prev] }`.
pub fn parameter_rhs(
    state: &SlaveState,
    a_hat: &SpectralCoefficients,
    h: f64,
    omega0: f64,
) -> [f64; 3] {
    let dyn_ = SlaveDynamics::new(omega0, state.order(), ConvolutionMethod::Direct);
    let v = prediction_residual(state, a_hat.as_slice(), h);
    let g = dyn_.sensitivity_product(state.b_prev.as_slice(), &v);
    g.map(|x| state.mu * h * x)
}

fn prediction_residual(state: &SlaveState, a_hat: &[Complex64], h: f64) -> Vec<Complex64> {
    a_hat
        .iter()
        .zip(state.b_prev.as_slice())
        .zip(&state.bdot_prev)
        .map(|((a, b), d)| a - b - d * h)
        .collect()
}

/// In-place integrator for a [`SlaveState`].
#[derive(Debug, Clone)]
pub struct SlaveIntegrator {
    state: SlaveState,
    h: f64,
    dynamics: SlaveDynamics,
    bdot: Vec<Complex64>,
    residual: Vec<Complex64>,
}

impl SlaveIntegrator {
    pub fn new(state: SlaveState, omega0: f64, h: f64) -> Self {
        Self::with_method(state, omega0, h, ConvolutionMethod::Direct)
    }

    pub fn with_method(
        state: SlaveState,
        omega0: f64,
        h: f64,
        method: ConvolutionMethod,
    ) -> Self {
        let n = state.order() + 1;
        Self {
            dynamics: SlaveDynamics::new(omega0, state.order(), method),
            state,
            h,
            bdot: vec![ZERO; n],
            residual: vec![ZERO; n],
        }
    }

    pub fn state(&self) -> &SlaveState {
        &self.state
    }

    pub fn into_state(self) -> SlaveState {
        self.state
    }

    /// One Euler step of coefficients and parameters. The parameter
    /// derivative uses the lag cache, not the derivative computed here.
    pub fn step(&mut self, a_hat: &SpectralCoefficients) -> Result<()> {
        let h = self.h;
        let st = &mut self.state;
        let a = a_hat.as_slice();
        assert_eq!(a.len(), st.b.order() + 1, "estimate order must equal slave order");

        self.dynamics
            .rhs_into(st.b.as_slice(), a, st.theta_hat, &st.coupling, &mut self.bdot);

        let mut theta_dot = [0.0; 3];
        if st.mu != 0.0 {
            for (k, r) in self.residual.iter_mut().enumerate() {
                *r = a[k] - st.b_prev.as_slice()[k] - st.bdot_prev[k] * h;
            }
            let g = self
                .dynamics
                .sensitivity_product(st.b_prev.as_slice(), &self.residual);
            theta_dot = g.map(|x| st.mu * h * x);
        }

        st.b_prev.as_mut_slice().copy_from_slice(st.b.as_slice());
        {
            let b = st.b.as_mut_slice();
            for (x, d) in b.iter_mut().zip(&self.bdot) {
                *x += d * h;
            }
            b[0].im = 0.0;
        }
        std::mem::swap(&mut st.bdot_prev, &mut self.bdot);
        let th = st.theta_hat.to_array();
        st.theta_hat = ModelParams::from_array(std::array::from_fn(|i| th[i] + h * theta_dot[i]));
        st.step_index += 1;

        let m = st.b.max_abs();
        if !m.is_finite() || m > DIVERGENCE_THRESHOLD || !st.theta_hat.is_finite() {
            return Err(Error::Divergence {
                step: st.step_index,
                time: st.step_index as f64 * h,
                magnitude: m,
            });
        }
        Ok(())
    }
}

/// Value-semantics wrapper around [`SlaveIntegrator::step`].
pub fn adaptive_step(
    state: &SlaveState,
    a_hat: &SpectralCoefficients,
    h: f64,
    omega0: f64,
) -> Result<SlaveState> {
    let mut integ = SlaveIntegrator::new(state.clone(), omega0, h);
    integ.step(a_hat)?;
    Ok(integ.into_state())
}

/// Jacobian of the error dynamics at `e = 0`: `Psi(theta) - i w0 Q(a_bar) - D`,
/// with `Q` row 0 zero and `Q[k][j] = a_bar_{k-j}` otherwise.
pub fn error_jacobian(
    a_bar: &SpectralCoefficients,
    theta: ModelParams,
    coupling: &CouplingMatrix,
    omega0: f64,
) -> DMatrix<Complex64> {
    let order = a_bar.order();
    let diag = linear_diag(theta, omega0, order);
    let iw = Complex64::new(0.0, omega0);
    let mut jac = DMatrix::from_fn(order + 1, order + 1, |k, j| {
        let q = if k == 0 {
            ZERO
        } else {
            a_bar.at(k as i64 - j as i64)
        };
        let d = if k == j { diag[k] } else { ZERO };
        d - iw * q
    });
    jac -= coupling.to_dense(order);
    jac
}

/// Eigenvalues of a complex square matrix via the complex Schur form.
pub fn eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let schur = nalgebra::Schur::try_new(m.clone(), 1e-14, 10_000)
        .ok_or_else(|| Error::config("Schur iteration did not converge"))?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Largest real part among the eigenvalues of [`error_jacobian`].
pub fn max_growth_rate(
    a_bar: &SpectralCoefficients,
    theta: ModelParams,
    coupling: &CouplingMatrix,
    omega0: f64,
) -> Result<f64> {
    let ev = eigenvalues(&error_jacobian(a_bar, theta, coupling, omega0))?;
    Ok(ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}
