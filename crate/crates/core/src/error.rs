use thiserror::Error;

/// Errors produced by the solvers, oracles and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("coefficient must be positive: {0}")]
    NonPositive(String),

    #[error("invalid ITM window: {0}")]
    InvalidWindow(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("CFL violation: dt = {dt:e} exceeds stability limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("step [{t0}, {t1}] straddles a window edge at {edge}")]
    StraddledEdge { t0: f64, t1: f64, edge: f64 },

    #[error("misaligned time stepping: {0}")]
    Misaligned(String),

    #[error("solvability condition violated: {0}")]
    Solvability(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
