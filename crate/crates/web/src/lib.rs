//! Browser bindings for the interactive demo page in `www/`.
//!
//! Every export takes plain numbers and returns a flat `Vec<f64>`
//! (a `Float64Array` on the JS side).

use kssync::experiment::{prepare_master, run_sync_replicate, CellParams, ExperimentConfig, Scenario};
use kssync::slave::{eigenvalues, error_jacobian};
use kssync::spectral::{synthesize_field, uniform_grid};
use kssync::{burn_in_init, CouplingMatrix, DomainConfig, ModelParams, NoiseConfig, NoiseMode};
use wasm_bindgen::prelude::*;

const H: f64 = 0.005;

/// Master field `u(t, x)` after burn-in, as `nt` rows of `nx` samples on a
/// uniform grid, `t` running over `[0, t_end]`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate_field(
    x_period: f64,
    order: usize,
    alpha: f64,
    beta: f64,
    gamma: f64,
    t_end: f64,
    nx: usize,
    nt: usize,
) -> Result<Vec<f64>, String> {
    if nx == 0 || nt < 2 {
        return Err("need nx >= 1 and nt >= 2".into());
    }
    let cfg = ExperimentConfig {
        scenario: Scenario::Simulate,
        x_period,
        m_order: order,
        k_order: order,
        grid_j: (2 * order + 1).max(nx),
        t_end,
        theta_true: ModelParams::new(alpha, beta, gamma),
        ..ExperimentConfig::default()
    };
    cfg.validate().map_err(|e| e.to_string())?;
    let master = prepare_master(&cfg).map_err(|e| e.to_string())?;
    let traj = &master.trajectory;
    let xs = uniform_grid(nx, x_period);
    let last = traj.len() - 1;
    let mut out = Vec::with_capacity(nx * nt);
    for r in 0..nt {
        let n = (r * last + (nt - 1) / 2) / (nt - 1);
        out.extend(synthesize_field(&traj.coeffs[n], &xs, x_period));
    }
    Ok(out)
}

/// Adaptive slave driven by the master at `X = 120`, `J = 240`.
/// Returns rows `[t, E2, alpha_hat, beta_hat, gamma_hat]` every 0.1 time units.
/// `snr_db <= 0` means noiseless observations.
#[wasm_bindgen]
pub fn run_estimation(order: usize, coupling_d: f64, mu: f64, snr_db: f64, t_end: f64, seed: u32) -> Result<Vec<f64>, String> {
    let noise = if snr_db > 0.0 {
        NoiseConfig {
            mode: NoiseMode::TargetSnr(snr_db),
            seed: 0,
        }
    } else {
        NoiseConfig::off()
    };
    let cfg = ExperimentConfig {
        scenario: Scenario::Estimate,
        m_order: order,
        k_order: order,
        t_end,
        coupling_d,
        mu,
        noise,
        base_seed: u64::from(seed),
        store_stride: 20,
        field_stride: 0,
        ..ExperimentConfig::default()
    };
    cfg.validate().map_err(|e| e.to_string())?;
    let master = prepare_master(&cfg).map_err(|e| e.to_string())?;
    let run = run_sync_replicate(&cfg, &CellParams::from_config(&cfg), &master, 0, false).map_err(|e| e.to_string())?;
    let tr = &run.trace;
    let mut out = Vec::with_capacity(5 * tr.len());
    for i in 0..tr.len() {
        let th = tr.theta_hat[i];
        out.extend([tr.times[i], tr.normalized_mse[i], th.alpha, th.beta, th.gamma]);
    }
    Ok(out)
}

/// Eigenvalues `[re_0, im_0, re_1, im_1, ...]` of the synchronization error
/// Jacobian at a burned-in master state, sorted by decreasing real part.
#[wasm_bindgen]
pub fn jacobian_spectrum(order: usize, x_period: f64, coupling_d: f64) -> Result<Vec<f64>, String> {
    let theta = ModelParams::new(1.15, -0.05, 0.98);
    let dom = DomainConfig::new(x_period, order, H, 1.0).map_err(|e| e.to_string())?;
    let a_bar = burn_in_init(theta, &dom, 100.0).map_err(|e| e.to_string())?;
    let j = error_jacobian(&a_bar, theta, &CouplingMatrix::ScalarIdentity(coupling_d), dom.omega0);
    let mut ev = eigenvalues(&j).map_err(|e| e.to_string())?;
    ev.sort_by(|a, b| b.re.total_cmp(&a.re));
    Ok(ev.iter().flat_map(|z| [z.re, z.im]).collect())
}
