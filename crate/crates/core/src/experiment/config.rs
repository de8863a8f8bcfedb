//! Flat `key = value` configuration files.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::observation::{NoiseConfig, NoiseMode};
use crate::spectral::{DomainConfig, ModelParams};
use crate::ubkf::UbkfConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Simulate,
    Sync,
    Estimate,
    Sweep,
    UbkfCompare,
    Control,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Simulate => "simulate",
            Scenario::Sync => "sync",
            Scenario::Estimate => "estimate",
            Scenario::Sweep => "sweep",
            Scenario::UbkfCompare => "ubkf-compare",
            Scenario::Control => "control",
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "simulate" => Scenario::Simulate,
            "sync" => Scenario::Sync,
            "estimate" => Scenario::Estimate,
            "sweep" => Scenario::Sweep,
            "ubkf-compare" | "ubkf_compare" => Scenario::UbkfCompare,
            "control" => Scenario::Control,
            _ => return Err(Error::config(format!("unknown scenario '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    K,
    D,
    Mu,
    Snr,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::K => "K",
            SweepAxis::D => "D",
            SweepAxis::Mu => "mu",
            SweepAxis::Snr => "snr",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "K" => SweepAxis::K,
            "D" => SweepAxis::D,
            "mu" => SweepAxis::Mu,
            "snr" => SweepAxis::Snr,
            _ => return Err(Error::config(format!("unknown sweep axis '{s}' (K, D, mu, snr)"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn new(axis: SweepAxis, values: Vec<f64>) -> Result<Self> {
        let spec = Self { axis, values };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::config("sweep_values must be non-empty"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("sweep_values must be finite"));
        }
        let inc = self.values.windows(2).all(|w| w[1] > w[0]);
        let dec = self.values.windows(2).all(|w| w[1] < w[0]);
        if !(inc || dec) {
            return Err(Error::config("sweep_values must be strictly monotone"));
        }
        if self.axis == SweepAxis::K && self.values.iter().any(|v| *v < 1.0 || v.fract() != 0.0) {
            return Err(Error::config("K sweep values must be positive integers"));
        }
        Ok(())
    }
}

/// Every knob of a scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub x_period: f64,
    pub m_order: usize,
    pub k_order: usize,
    pub h: f64,
    pub t_end: f64,
    pub grid_j: usize,
    pub theta_true: ModelParams,
    pub theta_init: ModelParams,
    pub coupling_d: f64,
    pub mu: f64,
    pub noise: NoiseConfig,
    pub runs: usize,
    pub burn_t: f64,
    /// Trace decimation in steps.
    pub store_stride: usize,
    /// Field snapshot decimation in steps; 0 disables `field.csv`.
    pub field_stride: usize,
    pub decimate_obs: usize,
    pub tail_fraction: f64,
    pub output_dir: PathBuf,
    pub base_seed: u64,
    pub sweep: Option<SweepSpec>,
    pub control_target: f64,
    pub control_ramp_t: f64,
    pub ubkf: UbkfConfig,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Estimate,
            x_period: 120.0,
            m_order: 64,
            k_order: 64,
            h: 0.005,
            t_end: 100.0,
            grid_j: 240,
            theta_true: ModelParams::new(1.15, -0.05, 0.98),
            theta_init: ModelParams::new(0.0, 0.0, 0.0),
            coupling_d: 1.0,
            mu: 200.0,
            noise: NoiseConfig::off(),
            runs: 1,
            burn_t: 100.0,
            store_stride: 10,
            field_stride: 200,
            decimate_obs: 1,
            tail_fraction: 0.2,
            output_dir: PathBuf::from("out"),
            base_seed: 0,
            sweep: None,
            control_target: 3.0,
            control_ramp_t: 20.0,
            ubkf: UbkfConfig::default(),
            jobs: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn master_domain(&self) -> Result<DomainConfig> {
        DomainConfig::new(self.x_period, self.m_order, self.h, self.t_end)
    }

    pub fn slave_domain(&self) -> Result<DomainConfig> {
        DomainConfig::new(self.x_period, self.k_order, self.h, self.t_end)
    }

    /// Uniform grid `x_j = j X / J`.
    pub fn grid(&self) -> Vec<f64> {
        crate::spectral::uniform_grid(self.grid_j, self.x_period)
    }

    /// Largest slave order any cell of this config uses.
    fn max_fit_order(&self) -> usize {
        let mut k = self.k_order;
        if let Some(s) = &self.sweep {
            if s.axis == SweepAxis::K {
                k = k.max(s.values.iter().fold(0.0f64, |a, b| a.max(*b)) as usize);
            }
        }
        match self.scenario {
            Scenario::Simulate => self.m_order,
            Scenario::Control => k,
            _ => k.max(self.m_order),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.master_domain()?;
        self.slave_domain()?;
        if self.runs < 1 {
            return Err(Error::config("runs must be >= 1"));
        }
        if self.store_stride < 1 {
            return Err(Error::config("store_stride must be >= 1"));
        }
        if self.decimate_obs < 1 {
            return Err(Error::config("decimate_obs must be >= 1"));
        }
        let need = 2 * self.max_fit_order() + 1;
        if self.grid_j < need {
            return Err(Error::config(format!(
                "grid_J = {} violates grid_J >= 2 max(M, K) + 1 = {need}",
                self.grid_j
            )));
        }
        if !self.theta_true.is_finite() || !self.theta_init.is_finite() {
            return Err(Error::config("parameters must be finite"));
        }
        if !self.coupling_d.is_finite() {
            return Err(Error::config("coupling_d must be finite"));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::config("mu must be >= 0"));
        }
        if !(self.burn_t >= 0.0 && self.burn_t.is_finite()) {
            return Err(Error::config("burn_T must be >= 0"));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(Error::config("tail_fraction must be in (0, 1]"));
        }
        if !(self.control_ramp_t > 0.0) {
            return Err(Error::config("control_ramp_T must be > 0"));
        }
        self.noise.validate()?;
        match (&self.sweep, self.scenario) {
            (Some(s), _) => s.validate()?,
            (None, Scenario::Sweep) => {
                return Err(Error::config("sweep scenario needs sweep_axis and sweep_values"))
            }
            _ => {}
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

fn parse_num<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse value '{v}' for key '{key}'"),
    })
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse_num(line, key, s.trim())).collect()
}

fn parse_triple(line: usize, key: &str, v: &str) -> Result<ModelParams> {
    let l = parse_list(line, key, v)?;
    if l.len() != 3 {
        return Err(Error::Parse {
            line,
            message: format!("'{key}' needs three comma-separated values"),
        });
    }
    Ok(ModelParams::new(l[0], l[1], l[2]))
}

/// Parses and validates a config. Unknown or repeated keys are errors.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut m_order = None;
    let mut k_order = None;
    let mut noise_kind = None;
    let mut sigma = None;
    let mut snr_db = None;
    let mut sweep_axis = None;
    let mut sweep_values = None;
    let mut seen = std::collections::HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, val) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: format!("expected 'key = value', got '{content}'"),
        })?;
        let key = key.trim();
        let v = val.trim();
        if !seen.insert(key.to_string()) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate key '{key}'"),
            });
        }
        match key {
            "scenario" => cfg.scenario = v.parse().map_err(|e: Error| Error::Parse { line, message: e.to_string() })?,
            "X" => cfg.x_period = parse_num(line, key, v)?,
            "M" => m_order = Some(parse_num(line, key, v)?),
            "K" => k_order = Some(parse_num(line, key, v)?),
            "h" => cfg.h = parse_num(line, key, v)?,
            "T" => cfg.t_end = parse_num(line, key, v)?,
            "grid_J" => cfg.grid_j = parse_num(line, key, v)?,
            "alpha" => cfg.theta_true.alpha = parse_num(line, key, v)?,
            "beta" => cfg.theta_true.beta = parse_num(line, key, v)?,
            "gamma" => cfg.theta_true.gamma = parse_num(line, key, v)?,
            "theta_init" => cfg.theta_init = parse_triple(line, key, v)?,
            "coupling_d" => cfg.coupling_d = parse_num(line, key, v)?,
            "mu" => cfg.mu = parse_num(line, key, v)?,
            "noise" => noise_kind = Some(v.to_string()),
            "sigma" => sigma = Some(parse_num::<f64>(line, key, v)?),
            "snr_db" => snr_db = Some(parse_num::<f64>(line, key, v)?),
            "runs" => cfg.runs = parse_num(line, key, v)?,
            "burn_T" => cfg.burn_t = parse_num(line, key, v)?,
            "store_stride" => cfg.store_stride = parse_num(line, key, v)?,
            "field_stride" => cfg.field_stride = parse_num(line, key, v)?,
            "decimate_obs" => cfg.decimate_obs = parse_num(line, key, v)?,
            "tail_fraction" => cfg.tail_fraction = parse_num(line, key, v)?,
            "output_dir" => cfg.output_dir = PathBuf::from(v),
            "base_seed" => cfg.base_seed = parse_num(line, key, v)?,
            "sweep_axis" => sweep_axis = Some(v.parse().map_err(|e: Error| Error::Parse { line, message: e.to_string() })?),
            "sweep_values" => sweep_values = Some(parse_list(line, key, v)?),
            "control_target" => cfg.control_target = parse_num(line, key, v)?,
            "control_ramp_T" => cfg.control_ramp_t = parse_num(line, key, v)?,
            "ubkf_process_noise_coeff" => cfg.ubkf.process_noise_coeff = parse_num(line, key, v)?,
            "ubkf_process_noise_theta" => cfg.ubkf.process_noise_theta = parse_num(line, key, v)?,
            "ubkf_prior_var" => cfg.ubkf.prior_var = parse_num(line, key, v)?,
            "ubkf_theta_prior" => cfg.ubkf.theta_prior = parse_triple(line, key, v)?,
            "jobs" => cfg.jobs = parse_num(line, key, v)?,
            _ => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key '{key}'"),
                })
            }
        }
    }

    cfg.m_order = m_order.unwrap_or(cfg.m_order);
    cfg.k_order = k_order.unwrap_or(cfg.m_order);

    let mode = match noise_kind.as_deref() {
        None if sigma.is_none() && snr_db.is_none() => NoiseMode::Off,
        None => return Err(Error::config("sigma / snr_db given without 'noise = sigma|snr'")),
        Some("off") => NoiseMode::Off,
        Some("sigma") => NoiseMode::FixedSigma(sigma.ok_or_else(|| Error::config("noise = sigma needs 'sigma'"))?),
        Some("snr") => NoiseMode::TargetSnr(snr_db.ok_or_else(|| Error::config("noise = snr needs 'snr_db'"))?),
        Some(other) => return Err(Error::config(format!("unknown noise mode '{other}' (off, sigma, snr)"))),
    };
    cfg.noise = NoiseConfig { mode, seed: 0 };

    cfg.sweep = match (sweep_axis, sweep_values) {
        (Some(axis), Some(values)) => Some(SweepSpec { axis, values }),
        (None, None) => None,
        _ => return Err(Error::config("sweep_axis and sweep_values must be given together")),
    };

    cfg.validate()?;
    Ok(cfg)
}
