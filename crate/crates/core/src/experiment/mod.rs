//! Scenario pipeline: burn-in, master run, observation, slave or filter run,
//! metrics and CSV output.
//!
//! Replicate `r` of sweep cell `c` is run index `c * runs + r` and draws its
//! observation noise from a ChaCha8 stream seeded with `base_seed + index`.
//! Results are collected in index order, so output files do not depend on
//! the number of worker threads.

pub mod config;
mod output;

use std::borrow::Cow;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::master::{burn_in_init, simulate_master, MasterTrajectory};
use crate::metrics::{cost_c, error_coeffs, normalized_mse, param_sq_err, tail_average, RunTrace};
use crate::observation::{add_noise, build_setup, FieldSampler, NoiseConfig, NoiseMode};
use crate::slave::{CouplingMatrix, SlaveIntegrator, SlaveState};
use crate::spectral::{ModelParams, SpectralCoefficients};
use crate::ubkf::{decode, FilterState, UbkfFilter};
use crate::Complex64;

pub use config::{load_config, parse_config, ExperimentConfig, Scenario, SweepAxis, SweepSpec};
pub use output::{fmt_f64, FIELD_HEADER, SUMMARY_HEADER, TRACE_HEADER};

/// Filter measurement variance used when observations are noiseless.
pub const NOISELESS_MEASUREMENT_VAR: f64 = 1e-10;

/// Spatially uniform reference `target * s(t / ramp_t)` with the clamped
/// smoothstep `s(r) = 3 r^2 - 2 r^3`.
pub fn control_reference(t: f64, _x: f64, target: f64, ramp_t: f64) -> f64 {
    let r = (t / ramp_t).clamp(0.0, 1.0);
    target * r * r * (3.0 - 2.0 * r)
}

/// Burned-in master trajectory stored at every step.
#[derive(Debug, Clone)]
pub struct MasterRun {
    pub trajectory: MasterTrajectory,
    /// Mean field power over the trajectory.
    pub power: f64,
}

pub fn prepare_master(cfg: &ExperimentConfig) -> Result<MasterRun> {
    let dom = cfg.master_domain()?;
    let a0 = burn_in_init(cfg.theta_true, &dom, cfg.burn_t)?;
    let trajectory = simulate_master(&a0, cfg.theta_true, &dom, 1)?;
    let power = trajectory.mean_power();
    Ok(MasterRun { trajectory, power })
}

/// Settings that vary between sweep cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellParams {
    pub k_order: usize,
    pub coupling_d: f64,
    pub mu: f64,
    pub noise: NoiseConfig,
    pub theta_init: ModelParams,
}

impl CellParams {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        let (mu, theta_init) = match cfg.scenario {
            Scenario::Sync => (0.0, cfg.theta_true),
            _ => (cfg.mu, cfg.theta_init),
        };
        Self {
            k_order: cfg.k_order,
            coupling_d: cfg.coupling_d,
            mu,
            noise: cfg.noise,
            theta_init,
        }
    }

    pub fn with_axis(mut self, axis: SweepAxis, value: f64) -> Self {
        match axis {
            SweepAxis::K => self.k_order = value as usize,
            SweepAxis::D => self.coupling_d = value,
            SweepAxis::Mu => self.mu = value,
            SweepAxis::Snr => self.noise.mode = NoiseMode::TargetSnr(value),
        }
        self
    }
}

/// Grid values of master (`u`) and slave (`v`) at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug)]
pub struct RunOutput {
    pub run_index: usize,
    pub trace: RunTrace,
    /// Slave coefficients (or filter mean) at the last completed step.
    pub final_state: SpectralCoefficients,
    pub field: Vec<FieldSnapshot>,
    /// Divergence or other failure that ended the run early.
    pub failure: Option<Error>,
}

impl RunOutput {
    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Ok,
    Partial,
    Failed,
}

impl CellStatus {
    pub fn name(self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Partial => "partial",
            CellStatus::Failed => "failed",
        }
    }
}

/// One `summary.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub axis_value: Option<f64>,
    pub run_id: usize,
    pub tail_e2_mean: f64,
    pub tail_e2_std: f64,
    pub final_err2: [f64; 3],
    pub status: CellStatus,
}

/// Statistics over the successful replicates of one cell.
pub fn summarize(axis_value: Option<f64>, run_id: usize, runs: &[RunOutput], tail_fraction: f64) -> CellSummary {
    let ok: Vec<&RunOutput> = runs.iter().filter(|r| r.is_ok()).collect();
    let status = match ok.len() {
        n if n == runs.len() => CellStatus::Ok,
        0 => CellStatus::Failed,
        _ => CellStatus::Partial,
    };
    let tails: Vec<f64> = ok
        .iter()
        .filter_map(|r| tail_average(&r.trace.normalized_mse, &r.trace.times, tail_fraction).ok())
        .collect();
    let (mean, std) = mean_std(&tails);
    let mut final_err2 = [f64::NAN; 3];
    if !ok.is_empty() {
        for (i, e) in final_err2.iter_mut().enumerate() {
            let vals: Vec<f64> = ok.iter().filter_map(|r| r.trace.param_sq_err.last().map(|p| p[i])).collect();
            *e = mean_std(&vals).0;
        }
    }
    CellSummary {
        axis_value,
        run_id,
        tail_e2_mean: mean,
        tail_e2_std: std,
        final_err2,
        status,
    }
}

/// Mean and sample standard deviation; the deviation is 0 for one value.
fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn noise_seed(cfg: &ExperimentConfig, run_index: usize) -> u64 {
    cfg.base_seed.wrapping_add(run_index as u64)
}

fn due(n: usize, stride: usize, last: usize) -> bool {
    n.is_multiple_of(stride) || n == last
}

fn record(
    trace: &mut RunTrace,
    t: f64,
    truth: &SpectralCoefficients,
    estimate: &SpectralCoefficients,
    theta_hat: ModelParams,
    theta_true: Option<ModelParams>,
) -> Result<()> {
    let e = error_coeffs(truth, estimate);
    let e2 = normalized_mse(&e, truth).unwrap_or(f64::NAN);
    let perr = match theta_true {
        Some(th) => param_sq_err(theta_hat, th, false)?,
        None => [f64::NAN; 3],
    };
    trace.push(t, e2, cost_c(&e), theta_hat, perr);
    Ok(())
}

/// Drives an adaptive slave with noisy grid observations of `truth(n)`.
#[allow(clippy::too_many_arguments)]
fn drive_slave<'a, F>(
    cfg: &ExperimentConfig,
    cell: &CellParams,
    truth_order: usize,
    truth: F,
    theta_true: Option<ModelParams>,
    sigma: f64,
    run_index: usize,
    want_field: bool,
) -> Result<RunOutput>
where
    F: Fn(usize) -> Cow<'a, SpectralCoefficients>,
{
    let k = cell.k_order;
    let dom = cfg.slave_domain()?.with_order(k)?;
    let grid = cfg.grid();
    let setup = build_setup(&grid, k, cfg.x_period)?;
    let obs_sampler = FieldSampler::new(&grid, cfg.x_period, truth_order);
    let slave_sampler = FieldSampler::new(&grid, cfg.x_period, k);
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(cfg, run_index));

    let coupling = CouplingMatrix::ScalarIdentity(cell.coupling_d);
    let state = SlaveState::new(SpectralCoefficients::canonical_seed(k), cell.theta_init, coupling, cell.mu)?;
    let mut slave = SlaveIntegrator::new(state, dom.omega0, dom.h);

    let steps = dom.steps();
    let mut trace = RunTrace::default();
    let mut field = Vec::new();
    let mut u = vec![0.0; grid.len()];
    let mut a_hat = SpectralCoefficients::zeros(k);
    let mut failure = None;
    for n in 0..=steps {
        let a = truth(n);
        let t = n as f64 * dom.h;
        let st = slave.state();
        if due(n, cfg.store_stride, steps) {
            record(&mut trace, t, &a, &st.b, st.theta_hat, theta_true)?;
        }
        if want_field && cfg.field_stride > 0 && due(n, cfg.field_stride, steps) {
            field.push(FieldSnapshot {
                t,
                u: obs_sampler.sample(&a),
                v: slave_sampler.sample(&st.b),
            });
        }
        if n == steps {
            break;
        }
        if n % cfg.decimate_obs == 0 {
            obs_sampler.sample_into(&a, &mut u);
            add_noise(&mut u, sigma, &mut rng);
            a_hat = setup.ls_fit(&u);
        }
        if let Err(e) = slave.step(&a_hat) {
            failure = Some(e);
            break;
        }
    }
    Ok(RunOutput {
        run_index,
        trace,
        final_state: slave.into_state().b,
        field,
        failure,
    })
}

/// One replicate of the synchronization/estimation pipeline.
pub fn run_sync_replicate(
    cfg: &ExperimentConfig,
    cell: &CellParams,
    master: &MasterRun,
    run_index: usize,
    want_field: bool,
) -> Result<RunOutput> {
    let sigma = cell.noise.sigma(master.power);
    let coeffs = &master.trajectory.coeffs;
    drive_slave(
        cfg,
        cell,
        cfg.m_order,
        |n| Cow::Borrowed(&coeffs[n]),
        Some(cfg.theta_true),
        sigma,
        run_index,
        want_field,
    )
}

/// Slave tracking the uniform control reference. `e2_norm` is NaN while the
/// reference is zero and the parameter error columns are NaN.
pub fn run_control_replicate(cfg: &ExperimentConfig, run_index: usize, want_field: bool) -> Result<RunOutput> {
    let cell = CellParams::from_config(cfg);
    let k = cell.k_order;
    let sigma = match cfg.noise.mode {
        NoiseMode::TargetSnr(_) => cfg.noise.sigma(cfg.control_target.powi(2)),
        _ => cfg.noise.sigma(0.0),
    };
    let (h, target, ramp) = (cfg.h, cfg.control_target, cfg.control_ramp_t);
    drive_slave(
        cfg,
        &cell,
        k,
        |n| {
            let mut c = vec![Complex64::new(0.0, 0.0); k + 1];
            c[0].re = control_reference(n as f64 * h, 0.0, target, ramp);
            Cow::Owned(SpectralCoefficients::from_vec_projected(c))
        },
        None,
        sigma,
        run_index,
        want_field,
    )
}

/// One replicate of the cubature filter on the same master trajectory.
pub fn run_ubkf_replicate(cfg: &ExperimentConfig, master: &MasterRun, run_index: usize) -> Result<RunOutput> {
    let k = cfg.k_order;
    let dom = cfg.slave_domain()?;
    let grid = cfg.grid();
    let setup = build_setup(&grid, k, cfg.x_period)?;
    let sampler = FieldSampler::new(&grid, cfg.x_period, cfg.m_order);
    let sigma = cfg.noise.sigma(master.power);
    let r = if sigma > 0.0 { sigma * sigma } else { NOISELESS_MEASUREMENT_VAR };
    let init = FilterState::new(&SpectralCoefficients::canonical_seed(k), r, &cfg.ubkf)?;
    let mut filter = UbkfFilter::new(init, &setup, &dom, cfg.ubkf.linear_only);
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(cfg, run_index));

    let coeffs = &master.trajectory.coeffs;
    let steps = dom.steps();
    let mut trace = RunTrace::default();
    let mut u = vec![0.0; grid.len()];
    let mut failure = None;
    let (theta0, b0) = decode(&filter.state().mean);
    record(&mut trace, 0.0, &coeffs[0], &b0, theta0, Some(cfg.theta_true))?;
    for n in 1..=steps {
        sampler.sample_into(&coeffs[n], &mut u);
        add_noise(&mut u, sigma, &mut rng);
        if let Err(e) = filter.step(&u) {
            failure = Some(e);
            break;
        }
        if due(n, cfg.store_stride, steps) {
            let (theta, b) = decode(&filter.state().mean);
            record(&mut trace, n as f64 * dom.h, &coeffs[n], &b, theta, Some(cfg.theta_true))?;
        }
    }
    Ok(RunOutput {
        run_index,
        trace,
        final_state: filter.state().coeffs(),
        field: Vec::new(),
        failure,
    })
}

/// Maps `f` over `0..n` on up to `jobs` threads (0 = all cores), in order.
pub fn par_map<T, F>(jobs: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if jobs != 1 && n > 1 {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
            return Ok(pool.install(|| (0..n).into_par_iter().map(&f).collect()));
        }
    }
    let _ = jobs;
    Ok((0..n).map(f).collect())
}

/// Output of one named group of runs (`""` for single-method scenarios).
#[derive(Debug)]
pub struct Section {
    pub name: String,
    pub summaries: Vec<CellSummary>,
    pub runs: Vec<RunOutput>,
}

#[derive(Debug, Default)]
pub struct ScenarioReport {
    pub sections: Vec<Section>,
    pub files: Vec<PathBuf>,
}

fn run_dir(base: &Path, run_index: usize) -> PathBuf {
    base.join(format!("run_{run_index:04}"))
}

/// Writes `trace.csv` (and `field.csv` when present) for one run.
fn write_run(base: &Path, grid: &[f64], run: &RunOutput) -> Result<Vec<PathBuf>> {
    let dir = run_dir(base, run.run_index);
    fs::create_dir_all(&dir)?;
    let trace = dir.join("trace.csv");
    output::write_trace(&trace, &run.trace)?;
    let mut files = vec![trace];
    if !run.field.is_empty() {
        let f = dir.join("field.csv");
        output::write_field(&f, grid, &run.field)?;
        files.push(f);
    }
    Ok(files)
}

/// Runs `runs` replicates per cell in parallel; each worker writes its own
/// trace files.
fn run_cells<F>(
    cfg: &ExperimentConfig,
    base: &Path,
    cells: &[(Option<f64>, CellParams)],
    run_one: F,
) -> Result<(Vec<CellSummary>, Vec<RunOutput>, Vec<PathBuf>)>
where
    F: Fn(&CellParams, usize, bool) -> Result<RunOutput> + Sync + Send,
{
    let grid = cfg.grid();
    let total = cells.len() * cfg.runs;
    let results = par_map(cfg.jobs, total, |idx| -> Result<(RunOutput, Vec<PathBuf>)> {
        let (_, cell) = &cells[idx / cfg.runs];
        let out = run_one(cell, idx, idx % cfg.runs == 0)?;
        let files = write_run(base, &grid, &out)?;
        Ok((out, files))
    })?;
    let mut runs = Vec::with_capacity(total);
    let mut files = Vec::new();
    for r in results {
        let (out, f) = r?;
        runs.push(out);
        files.extend(f);
    }
    let summaries = cells
        .iter()
        .enumerate()
        .map(|(c, (axis, _))| summarize(*axis, c, &runs[c * cfg.runs..(c + 1) * cfg.runs], cfg.tail_fraction))
        .collect();
    Ok((summaries, runs, files))
}

fn first_failure(runs: Vec<RunOutput>) -> (Vec<RunOutput>, Option<Error>) {
    let mut err = None;
    let runs = runs
        .into_iter()
        .map(|mut r| {
            if err.is_none() {
                if let Some(e) = r.failure.take() {
                    let msg = e.to_string();
                    err = Some(Error::Run { run: r.run_index, source: Box::new(e) });
                    r.failure = Some(Error::config(msg));
                }
            }
            r
        })
        .collect();
    (runs, err)
}

fn write_summary_file(dir: &Path, rows: &[CellSummary], files: &mut Vec<PathBuf>) -> Result<()> {
    let p = dir.join("summary.csv");
    output::write_summary(&p, rows)?;
    files.push(p);
    Ok(())
}

/// Executes `cfg.scenario`, writing all outputs under `cfg.output_dir`.
/// A diverged replicate is reported as [`Error::Run`] after the outputs are
/// written, except in sweeps, where it only marks its cell.
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<ScenarioReport> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    match cfg.scenario {
        Scenario::Simulate => run_simulate(cfg),
        Scenario::Sweep => {
            let spec = cfg.sweep.clone().ok_or_else(|| Error::config("sweep scenario needs a sweep spec"))?;
            run_sweep(cfg, &spec)
        }
        Scenario::Sync | Scenario::Estimate => {
            let master = prepare_master(cfg)?;
            let cells = [(None, CellParams::from_config(cfg))];
            let (summaries, runs, mut files) =
                run_cells(cfg, out, &cells, |cell, i, f| run_sync_replicate(cfg, cell, &master, i, f))?;
            write_summary_file(out, &summaries, &mut files)?;
            let (runs, err) = first_failure(runs);
            finish(vec![Section { name: String::new(), summaries, runs }], files, err)
        }
        Scenario::Control => {
            let cells = [(None, CellParams::from_config(cfg))];
            let (summaries, runs, mut files) = run_cells(cfg, out, &cells, |_, i, f| run_control_replicate(cfg, i, f))?;
            write_summary_file(out, &summaries, &mut files)?;
            let (runs, err) = first_failure(runs);
            finish(vec![Section { name: String::new(), summaries, runs }], files, err)
        }
        Scenario::UbkfCompare => {
            let master = prepare_master(cfg)?;
            let mut files = Vec::new();
            let mut sections = Vec::new();
            let mut err = None;
            let cells = [(None, CellParams::from_config(cfg))];

            let sync_dir = out.join("sync");
            fs::create_dir_all(&sync_dir)?;
            let (summaries, runs, f) =
                run_cells(cfg, &sync_dir, &cells, |cell, i, fl| run_sync_replicate(cfg, cell, &master, i, fl))?;
            files.extend(f);
            write_summary_file(&sync_dir, &summaries, &mut files)?;
            let (runs, e) = first_failure(runs);
            err = err.or(e);
            sections.push(Section { name: "sync".into(), summaries, runs });

            let ubkf_dir = out.join("ubkf");
            fs::create_dir_all(&ubkf_dir)?;
            let (summaries, runs, f) = run_cells(cfg, &ubkf_dir, &cells, |_, i, _| run_ubkf_replicate(cfg, &master, i))?;
            files.extend(f);
            write_summary_file(&ubkf_dir, &summaries, &mut files)?;
            let (runs, e) = first_failure(runs);
            err = err.or(e);
            sections.push(Section { name: "ubkf".into(), summaries, runs });
            finish(sections, files, err)
        }
    }
}

fn finish(sections: Vec<Section>, files: Vec<PathBuf>, err: Option<Error>) -> Result<ScenarioReport> {
    match err {
        Some(e) => Err(e),
        None => Ok(ScenarioReport { sections, files }),
    }
}

fn run_simulate(cfg: &ExperimentConfig) -> Result<ScenarioReport> {
    let master = prepare_master(cfg)?;
    let grid = cfg.grid();
    let sampler = FieldSampler::new(&grid, cfg.x_period, cfg.m_order);
    let stride = if cfg.field_stride > 0 { cfg.field_stride } else { cfg.store_stride };
    let coeffs = &master.trajectory.coeffs;
    let last = coeffs.len() - 1;
    let snaps: Vec<FieldSnapshot> = (0..=last)
        .filter(|n| due(*n, stride, last))
        .map(|n| {
            let u = sampler.sample(&coeffs[n]);
            FieldSnapshot {
                t: master.trajectory.times[n],
                v: vec![0.0; u.len()],
                u,
            }
        })
        .collect();
    let p = cfg.output_dir.join("field.csv");
    output::write_field(&p, &grid, &snaps)?;
    Ok(ScenarioReport { sections: Vec::new(), files: vec![p] })
}

/// One `summary.csv` row per axis value, `runs` replicates each. The master
/// trajectory is shared by all cells.
pub fn run_sweep(cfg: &ExperimentConfig, spec: &SweepSpec) -> Result<ScenarioReport> {
    spec.validate()?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    let master = prepare_master(cfg)?;
    let base = CellParams::from_config(cfg);
    let cells: Vec<(Option<f64>, CellParams)> =
        spec.values.iter().map(|v| (Some(*v), base.with_axis(spec.axis, *v))).collect();
    let (summaries, runs, mut files) = run_cells(cfg, out, &cells, |cell, i, f| {
        run_sync_replicate(cfg, cell, &master, i, f)
    })?;
    write_summary_file(out, &summaries, &mut files)?;
    Ok(ScenarioReport {
        sections: vec![Section { name: String::new(), summaries, runs }],
        files,
    })
}
