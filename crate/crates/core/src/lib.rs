//! Pseudo-spectral simulation of the generalized Kuramoto-Sivashinsky
//! equation with master-slave synchronization, online parameter estimation
//! and a cubature Kalman filter baseline.

pub mod error;
pub mod experiment;
pub mod master;
pub mod metrics;
pub mod observation;
pub mod slave;
pub mod spectral;
pub mod ubkf;

pub use error::{Error, Result};
pub use master::{burn_in_init, simulate_master, Integrator, MasterTrajectory};
pub use metrics::RunTrace;
pub use observation::{NoiseConfig, NoiseMode, ObservationSetup};
pub use slave::{CouplingMatrix, SlaveState};
pub use spectral::{DomainConfig, ModelParams, SpectralCoefficients};

pub use num_complex::Complex64;
