use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("length must be positive, got {0}")]
    NonPositiveLength(f64),

    #[error("grid needs at least 8 cells, got {0}")]
    TooFewCells(usize),

    #[error("patch edge z = {coord} is not a grid node (dz = {dz})")]
    PatchOffGrid { coord: f64, dz: f64 },

    #[error("patch [{lo}, {hi}] must satisfy 0 < z_p1 < z_p2 < L = {length}")]
    PatchOutOfDomain { lo: f64, hi: f64, length: f64 },

    #[error("field has {got} values but the grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },

    #[error("clamped boundary violated: w(0) = {value:e}")]
    BcViolation { value: f64 },

    #[error("equilibrium is not C1 at the patch: a = {a}, 2b(z_p2 - z_p1) = {expected}")]
    KinkMismatch { a: f64, expected: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("observer and plant use different frameworks")]
    FrameworkMismatch,

    #[error("time step {dt} exceeds the rk4 stability limit {limit}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("implicit midpoint iteration did not converge in {iterations} iterations (update {update:e})")]
    NonConvergence { iterations: usize, update: f64 },

    #[error("config parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("config validation failed: {0}")]
    Validation(String),

    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("malformed data file {path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("log is empty")]
    EmptyLog,

    #[error("io error on {path}: {source}")]
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

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation(_) | Error::FileNotFound(_) => 2,
            Error::PatchOffGrid { .. }
            | Error::PatchOutOfDomain { .. }
            | Error::NonPositiveLength(_)
            | Error::TooFewCells(_)
            | Error::KinkMismatch { .. }
            | Error::InvalidParameter(_)
            | Error::CflViolation { .. } => 2,
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
