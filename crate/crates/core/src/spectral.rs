//! Truncated Fourier series of real periodic fields.
//!
//! A real field `u(x)` on `[0, X)` is stored through its one-sided
//! coefficients `c_0 .. c_K`; the negative half of the spectrum is implied
//! by Hermitian symmetry, `c_{-k} = conj(c_k)`, and every index beyond the
//! truncation order reads as zero. The basis is `phi_k(x) = exp(i w0 k x)`
//! with `w0 = 2 pi / X`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Spatial period, truncation order and time discretization of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainConfig {
    pub x_period: f64,
    pub order: usize,
    pub omega0: f64,
    pub h: f64,
    pub t_end: f64,
}

impl DomainConfig {
    pub fn new(x_period: f64, order: usize, h: f64, t_end: f64) -> Result<Self> {
        if !(x_period.is_finite() && x_period > 0.0) {
            return Err(Error::config(format!("X must be > 0, got {x_period}")));
        }
        if order < 1 {
            return Err(Error::config("K must be >= 1"));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::config(format!("h must be > 0, got {h}")));
        }
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::config(format!("T must be > 0, got {t_end}")));
        }
        Ok(Self {
            x_period,
            order,
            omega0: 2.0 * PI / x_period,
            h,
            t_end,
        })
    }

    /// Same domain with a different truncation order.
    pub fn with_order(&self, order: usize) -> Result<Self> {
        Self::new(self.x_period, order, self.h, self.t_end)
    }

    /// Number of whole time steps in `[0, T]`.
    pub fn steps(&self) -> usize {
        steps_for(self.t_end, self.h)
    }
}

/// `floor(t / h)`, tolerant to the rounding of `t / h` just below an integer.
pub(crate) fn steps_for(t: f64, h: f64) -> usize {
    let ratio = t / h;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.floor() as usize
    }
}

/// The KS coefficients `(alpha, beta, gamma)` of
/// `u_t + u u_x + alpha u_xx + beta u_xxx + gamma u_xxxx = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl ModelParams {
    pub const fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite() && self.gamma.is_finite()
    }
}

/// One-sided coefficient vector `c_0 .. c_K` of a real periodic field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoefficients(Vec<Complex64>);

impl SpectralCoefficients {
    /// Rejects an empty vector or a mean coefficient with nonzero imaginary part.
    pub fn new(c: Vec<Complex64>) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::config("coefficient vector must hold at least c_0"));
        }
        if c[0].im != 0.0 {
            return Err(Error::config("c_0 must be real"));
        }
        Ok(Self(c))
    }

    /// Like [`new`](Self::new) but projects `c_0` onto the reals.
    pub fn from_vec_projected(mut c: Vec<Complex64>) -> Self {
        assert!(!c.is_empty(), "coefficient vector must hold at least c_0");
        c[0].im = 0.0;
        Self(c)
    }

    pub fn zeros(order: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); order + 1])
    }

    /// `c_1 = 0.5` (hence `c_{-1} = 0.5`), all other modes zero: `u = cos(w0 x)`.
    pub fn canonical_seed(order: usize) -> Self {
        let mut c = Self::zeros(order);
        if order >= 1 {
            c.0[1] = Complex64::new(0.5, 0.0);
        }
        c
    }

    pub fn order(&self) -> usize {
        self.0.len() - 1
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.0
    }

    /// Hermitian-aware indexing, see [`coeff_at`].
    pub fn at(&self, k: i64) -> Complex64 {
        coeff_at(self, k)
    }

    /// Mean field power `|c_0|^2 + 2 sum_{k>=1} |c_k|^2`, i.e. `(1/X) int u^2 dx`.
    pub fn power(&self) -> f64 {
        two_sided_power(&self.0)
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Copy truncated or zero-padded to another order.
    pub fn resized(&self, order: usize) -> Self {
        let mut c = self.0.clone();
        c.resize(order + 1, Complex64::new(0.0, 0.0));
        Self(c)
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.0
    }
}

pub(crate) fn two_sided_power(c: &[Complex64]) -> f64 {
    c.iter()
        .enumerate()
        .map(|(k, z)| if k == 0 { z.norm_sqr() } else { 2.0 * z.norm_sqr() })
        .sum()
}

/// `c_k` for `0 <= k <= K`, `conj(c_{-k})` for negative `k`, zero beyond the truncation.
pub fn coeff_at(c: &SpectralCoefficients, k: i64) -> Complex64 {
    let idx = k.unsigned_abs() as usize;
    match c.0.get(idx) {
        Some(z) if k >= 0 => *z,
        Some(z) => z.conj(),
        None => Complex64::new(0.0, 0.0),
    }
}

/// Diagonal of the linear operator:
/// `alpha w0^2 k^2 + i beta w0^3 k^3 - gamma w0^4 k^4` for `k = 0 ..= order`.
pub fn linear_diag(theta: ModelParams, omega0: f64, order: usize) -> Vec<Complex64> {
    (0..=order)
        .map(|k| linear_entry(theta, omega0 * k as f64))
        .collect()
}

/// One diagonal entry at wavenumber `wk = w0 k`.
#[inline]
pub(crate) fn linear_entry(theta: ModelParams, wk: f64) -> Complex64 {
    let wk2 = wk * wk;
    Complex64::new(
        theta.alpha * wk2 - theta.gamma * wk2 * wk2,
        theta.beta * wk2 * wk,
    )
}

/// `eta_k = k * sum_{l=-K}^{K} c_l c_{k-l}` for `k = 0 ..= K`, by direct summation.
pub fn nonlinear_term(c: &SpectralCoefficients) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); c.0.len()];
    let mut full = Vec::new();
    direct_convolution(&c.0, &mut full, &mut out);
    out
}

/// Two-sided layout `c_{-K} .. c_K` used by the direct convolution.
fn fill_two_sided(c: &[Complex64], full: &mut Vec<Complex64>) {
    let order = c.len() - 1;
    full.clear();
    full.extend(c[1..].iter().rev().map(|z| z.conj()));
    full.extend_from_slice(c);
    debug_assert_eq!(full.len(), 2 * order + 1);
}

fn direct_convolution(c: &[Complex64], full: &mut Vec<Complex64>, out: &mut [Complex64]) {
    let order = c.len() - 1;
    fill_two_sided(c, full);
    out[0] = Complex64::new(0.0, 0.0);
    for k in 1..=order {
        // l runs over [k - K, K]; in the two-sided layout l -> l + K and
        // k - l -> k - l + K, so the pair indices sum to k + 2K.
        let lo = k;
        let hi = 2 * order;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in lo..=hi {
            acc += full[i] * full[k + 2 * order - i];
        }
        out[k] = acc * k as f64;
    }
}

/// How the quadratic term is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvolutionMethod {
    /// O(K^2) direct sum.
    #[default]
    Direct,
    /// Zero-padded FFT product, O(K log K).
    Fft,
}

/// Reusable workspace for evaluating [`nonlinear_term`] repeatedly at one order.
#[derive(Clone)]
pub struct Convolver {
    order: usize,
    method: ConvolutionMethod,
    full: Vec<Complex64>,
    fft: Option<FftWork>,
}

#[derive(Clone)]
struct FftWork {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl std::fmt::Debug for Convolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Convolver")
            .field("order", &self.order)
            .field("method", &self.method)
            .finish()
    }
}

impl Convolver {
    pub fn new(order: usize, method: ConvolutionMethod) -> Self {
        let fft = match method {
            ConvolutionMethod::Direct => None,
            ConvolutionMethod::Fft => {
                // N >= 3K + 1 keeps the circular wrap of the degree-2K product
                // away from the retained modes 0..=K.
                let n = (3 * order + 1).next_power_of_two();
                let mut planner = FftPlanner::new();
                let forward = planner.plan_fft_forward(n);
                let inverse = planner.plan_fft_inverse(n);
                let scratch_len = forward
                    .get_inplace_scratch_len()
                    .max(inverse.get_inplace_scratch_len());
                Some(FftWork {
                    forward,
                    inverse,
                    buf: vec![Complex64::new(0.0, 0.0); n],
                    scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
                })
            }
        };
        Self {
            order,
            method,
            full: Vec::with_capacity(2 * order + 1),
            fft,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn method(&self) -> ConvolutionMethod {
        self.method
    }

    /// Writes `eta(c)` into `out`; both must have length `order + 1`.
    pub fn eta_into(&mut self, c: &[Complex64], out: &mut [Complex64]) {
        assert_eq!(c.len(), self.order + 1);
        assert_eq!(out.len(), self.order + 1);
        match self.fft.as_mut() {
            None => direct_convolution(c, &mut self.full, out),
            Some(work) => {
                let n = work.buf.len();
                let zero = Complex64::new(0.0, 0.0);
                work.buf.iter_mut().for_each(|z| *z = zero);
                for (k, z) in c.iter().enumerate() {
                    work.buf[k] = *z;
                    if k > 0 {
                        work.buf[n - k] = z.conj();
                    }
                }
                // field samples, squared, back to spectrum
                work.inverse
                    .process_with_scratch(&mut work.buf, &mut work.scratch);
                for z in work.buf.iter_mut() {
                    *z = *z * *z;
                }
                work.forward
                    .process_with_scratch(&mut work.buf, &mut work.scratch);
                let scale = 1.0 / n as f64;
                out[0] = zero;
                for k in 1..=self.order {
                    out[k] = work.buf[k] * (k as f64 * scale);
                }
            }
        }
    }

    pub fn eta(&mut self, c: &SpectralCoefficients) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); c.0.len()];
        self.eta_into(&c.0, &mut out);
        out
    }
}

/// Evaluates `u(x_j) = c_0 + sum_k 2 Re(c_k exp(i w0 k x_j))`.
pub fn synthesize_field(c: &SpectralCoefficients, xs: &[f64], x_period: f64) -> Vec<f64> {
    let omega0 = 2.0 * PI / x_period;
    xs.iter()
        .map(|&x| {
            let mut u = c.0[0].re;
            for (k, z) in c.0.iter().enumerate().skip(1) {
                let phase = omega0 * k as f64 * x;
                u += 2.0 * (z * (I * phase).exp()).re;
            }
            u
        })
        .collect()
}

/// `n` uniformly spaced points `j X / n` on `[0, X)`.
pub fn uniform_grid(n: usize, x_period: f64) -> Vec<f64> {
    (0..n).map(|j| j as f64 * x_period / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub(crate) fn random_coeffs(order: usize, seed: u64) -> SpectralCoefficients {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<Complex64> = (0..=order)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        v[0].im = 0.0;
        SpectralCoefficients::new(v).unwrap()
    }

    /// Textbook double loop over the two-sided index range.
    fn brute_eta(cf: &SpectralCoefficients) -> Vec<Complex64> {
        let order = cf.order() as i64;
        (0..=order)
            .map(|k| {
                let mut acc = c(0.0, 0.0);
                for l in -order..=order {
                    acc += coeff_at(cf, l) * coeff_at(cf, k - l);
                }
                acc * k as f64
            })
            .collect()
    }

    #[test]
    fn coeff_at_reflects_and_truncates() {
        let cf = SpectralCoefficients::new(vec![c(1.0, 0.0), c(2.0, 1.0)]).unwrap();
        assert_eq!(coeff_at(&cf, -1), c(2.0, -1.0));
        assert_eq!(coeff_at(&cf, 5), c(0.0, 0.0));
        assert_eq!(coeff_at(&cf, -5), c(0.0, 0.0));
        let single = SpectralCoefficients::new(vec![c(3.0, 0.0)]).unwrap();
        assert_eq!(coeff_at(&single, 0), c(3.0, 0.0));
    }

    #[test]
    fn complex_mean_is_rejected() {
        assert!(SpectralCoefficients::new(vec![c(1.0, 1e-3)]).is_err());
        assert!(SpectralCoefficients::new(vec![]).is_err());
    }

    #[test]
    fn linear_diag_examples() {
        let zero = linear_diag(ModelParams::default(), 0.7, 4);
        assert!(zero.iter().all(|z| *z == c(0.0, 0.0)));

        let d = linear_diag(ModelParams::new(1.0, 0.0, 0.0), 1.0, 4);
        assert_eq!(d[2], c(4.0, 0.0));

        // Reference from the three monomials evaluated independently.
        let theta = ModelParams::new(1.15, -0.05, 0.98);
        let w = 2.0 * PI / 120.0;
        let d = linear_diag(theta, w, 1);
        let re = 1.15 * w.powi(2) - 0.98 * w.powi(4);
        let im = -0.05 * w.powi(3);
        assert_relative_eq!(d[1].re, re, max_relative = 1e-14);
        assert_relative_eq!(d[1].im, im, max_relative = 1e-14);
        // 40-digit evaluation of the monomials
        assert_relative_eq!(d[1].re, 3.145_424_483_896_344e-3, max_relative = 1e-13);
        assert_relative_eq!(d[1].im, -7.177_378_861_180_514e-6, max_relative = 1e-13);
        assert_eq!(d[0], c(0.0, 0.0));
    }

    #[test]
    fn nonlinear_term_examples() {
        assert!(nonlinear_term(&SpectralCoefficients::zeros(5))
            .iter()
            .all(|z| *z == c(0.0, 0.0)));

        let cf = SpectralCoefficients::new(vec![c(2.0, 0.0), c(1.0, 0.0)]).unwrap();
        let eta = nonlinear_term(&cf);
        assert_eq!(eta[0], c(0.0, 0.0));
        assert_eq!(eta[1], c(4.0, 0.0));
    }

    #[test]
    fn nonlinear_term_matches_brute_force_k8() {
        let cf = random_coeffs(8, 11);
        let fast = nonlinear_term(&cf);
        let slow = brute_eta(&cf);
        let scale = slow.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn fft_and_direct_paths_agree_for_all_small_orders() {
        for order in 1..=16 {
            for seed in 0..4 {
                let cf = random_coeffs(order, 100 * order as u64 + seed);
                let direct = Convolver::new(order, ConvolutionMethod::Direct).eta(&cf);
                let fft = Convolver::new(order, ConvolutionMethod::Fft).eta(&cf);
                let scale = direct.iter().map(|z| z.norm()).fold(1e-300, f64::max);
                for (a, b) in direct.iter().zip(&fft) {
                    assert!((a - b).norm() <= 1e-12 * scale, "K={order}");
                }
                assert_eq!(fft[0], c(0.0, 0.0));
            }
        }
    }

    #[test]
    fn synthesize_examples() {
        let constant = SpectralCoefficients::new(vec![c(5.0, 0.0)]).unwrap();
        assert_eq!(synthesize_field(&constant, &[0.0, 1.3, 7.0], 3.0), vec![5.0; 3]);

        let cf = SpectralCoefficients::new(vec![c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        let u = synthesize_field(&cf, &[0.0, 1.0, 2.0, 3.0], 4.0);
        for (a, b) in u.iter().zip([2.0, 0.0, -2.0, 0.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn synthesized_mean_is_c0() {
        let cf = random_coeffs(9, 3);
        let x_period = 7.5;
        let xs = uniform_grid(200, x_period);
        let u = synthesize_field(&cf, &xs, x_period);
        let mean = u.iter().sum::<f64>() / u.len() as f64;
        assert!((mean - cf.as_slice()[0].re).abs() < 1e-10);
    }

    #[test]
    fn steps_tolerates_rounding() {
        assert_eq!(steps_for(100.0, 0.005), 20_000);
        assert_eq!(steps_for(0.3, 0.1), 3);
        assert_eq!(steps_for(1.05, 0.5), 2);
    }

    #[test]
    fn domain_config_validation() {
        assert!(DomainConfig::new(0.0, 4, 0.1, 1.0).is_err());
        assert!(DomainConfig::new(1.0, 0, 0.1, 1.0).is_err());
        assert!(DomainConfig::new(1.0, 4, -0.1, 1.0).is_err());
        assert!(DomainConfig::new(1.0, 4, 0.1, 0.0).is_err());
        let d = DomainConfig::new(120.0, 32, 0.005, 100.0).unwrap();
        assert_eq!(d.omega0, 2.0 * PI / 120.0);
    }

    proptest! {
        #[test]
        fn synthesized_field_is_real(order in 1usize..12, seed in 0u64..1000) {
            let cf = random_coeffs(order, seed);
            let x_period = 10.0;
            let w = 2.0 * PI / x_period;
            let norm: f64 = cf.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            for x in uniform_grid(4 * order, x_period) {
                let mut s = c(0.0, 0.0);
                for k in -(order as i64)..=(order as i64) {
                    s += coeff_at(&cf, k) * (I * (w * k as f64 * x)).exp();
                }
                prop_assert!(s.im.abs() < 1e-12 * (1.0 + norm));
            }
        }

        #[test]
        fn parseval_matches_trapezoid(order in 1usize..12, seed in 0u64..1000) {
            let cf = random_coeffs(order, seed);
            let x_period = 3.0;
            let n = 8 * order + 8;
            let xs = uniform_grid(n, x_period);
            let u = synthesize_field(&cf, &xs, x_period);
            // periodic trapezoid on a uniform grid
            let quad = u.iter().map(|v| v * v).sum::<f64>() / n as f64;
            let p = cf.power();
            prop_assert!((quad - p).abs() <= 1e-10 * p.max(1e-300));
        }

        #[test]
        fn mean_mode_is_null(order in 1usize..10, seed in 0u64..1000) {
            let cf = random_coeffs(order, seed);
            prop_assert_eq!(nonlinear_term(&cf)[0], c(0.0, 0.0));
            let th = ModelParams::new(1.0, 2.0, 3.0);
            prop_assert_eq!(linear_diag(th, 0.3, order)[0], c(0.0, 0.0));
        }
    }
}
