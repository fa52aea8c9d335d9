use std::path::PathBuf;

use cnf_autodiff::AdError;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] AdError),
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {message}")]
    ConfigParse { path: PathBuf, message: String },
    #[error("non-finite latent state at integration step {step}")]
    NonFiniteState { step: usize },
    #[error("non-finite {term} at x={x}, t={t}, mu={mu}")]
    NonFiniteTerm {
        term: &'static str,
        x: f64,
        t: f64,
        mu: f64,
    },
    #[error("time {t} is not a node of the latent trajectory")]
    TimeOffGrid { t: f64 },
    #[error("point ({x}, {t}) lies on a zero set of the distance function")]
    OnZeroSet { x: f64, t: f64 },
    #[error("the interior collocation set is empty")]
    EmptyInterior,
    #[error("the parameter list is empty")]
    EmptyMuList,
    #[error("mu must be positive, got {0}")]
    NonPositiveMu(f64),
    #[error("expected {expected} targets, got {got}")]
    MissingTargets { expected: usize, got: usize },
    #[error("no initial auxiliary latent stored for mu={0}")]
    UnknownMu(f64),
    #[error("Newton iteration did not converge at time step {step} (residual {residual:e})")]
    NewtonDiverged { step: usize, residual: f64 },
    #[error("relative error against an all-zero reference")]
    ZeroNorm,
    #[error("grid shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("training diverged at epoch {epoch} (loss {loss:e})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("checkpoint checksum mismatch or truncated file")]
    Checksum,
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("checkpoint format version {found} predates version {current}; migration required")]
    MigrationRequired { found: u32, current: u32 },
    #[error("checkpoint format version {found} is newer than supported version {current}")]
    UnsupportedVersion { found: u32, current: u32 },
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
    #[error("malformed grid file: {0}")]
    MalformedGrid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
