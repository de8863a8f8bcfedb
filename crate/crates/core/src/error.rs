use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates one of its invariants.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Some coefficient magnitude exceeded the divergence threshold.
    #[error("divergence at step {step} (t = {time}): |c| = {magnitude:e}")]
    Divergence {
        step: usize,
        time: f64,
        magnitude: f64,
    },

    #[error("degenerate observation grid: {0}")]
    DegenerateGrid(String),

    #[error("cannot normalize: {0}")]
    InvalidNormalization(&'static str),

    /// Covariance factorization failed even after jitter repair.
    #[error("covariance collapse: {0}")]
    CovarianceCollapse(String),

    #[error("config parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Failure inside one replicate of an experiment.
    #[error("run {run}: {source}")]
    Run {
        run: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// The innermost error, looking through [`Error::Run`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Run { source, .. } => source.root(),
            e => e,
        }
    }
}
