use thiserror::Error;

use crate::picard::ContractionTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("negative value {value} at node {node} in {what}")]
    Domain {
        what: &'static str,
        node: usize,
        value: f64,
    },

    #[error("field shape does not match grid: {0}")]
    DimensionMismatch(String),

    #[error("grid too small: need at least {need} nodes per axis, got {got}")]
    GridTooSmall { need: usize, got: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("CFL violation: dt = {dt:e} exceeds admissible {admissible:e}")]
    Cfl { dt: f64, admissible: f64 },

    #[error("conjugate gradient did not converge: residual {residual:e} after {iterations} iterations")]
    LinearSolver { residual: f64, iterations: usize },

    #[error("Picard iteration did not converge after {} iterations", .trace.gamma.len())]
    PicardNonConvergence { trace: ContractionTrace },

    #[error("Picard increments grew at iteration {iteration} (Gamma {previous:e} -> {current:e})")]
    PicardGrowth {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("regularity guard tripped: {0}")]
    RegularityLoss(String),

    #[error("time step fell below dt_min = {dt_min:e} at t = {t}; suspected loss of regularity ({cause})")]
    MaximalTime { t: f64, dt_min: f64, cause: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("tracked region left the domain (marker {marker})")]
    RegionEscape { marker: usize },

    #[error("initial data rejected: {0}")]
    InitialData(String),

    #[error("bound regime mismatch: {0}")]
    RegimeMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
