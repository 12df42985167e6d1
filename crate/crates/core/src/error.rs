use thiserror::Error;

/// Errors raised by the solvers and checkers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite {what} at {location}")]
    NonFinite { what: String, location: String },

    #[error("control {value:?} lies outside the control set")]
    ControlOutsideSet { value: Vec<f64> },

    #[error("state became non-finite on path {path} at node {node}")]
    StateOverflow { path: usize, node: usize },

    #[error("fixed-point iteration did not converge at step {step} (last change {change:e})")]
    FixedPointNotConverged { step: usize, change: f64 },

    #[error("explicit scheme unstable: time step {dt:e} exceeds the stable bound {required:e} (use at least {substeps} substeps)")]
    StabilityViolation { dt: f64, required: f64, substeps: usize },

    #[error("policy iteration did not converge at time index {time_index}")]
    PolicyIterationNotConverged { time_index: usize },

    #[error("second derivative undefined at kink column {column} (x = {x})")]
    KinkColumn { column: usize, x: f64 },

    #[error("surface is not classical: declared kink at x = {x}; use the viscosity conditions instead")]
    NotClassical { x: f64 },

    #[error("tree depth {depth} exceeds the limit {limit}")]
    DepthTooLarge { depth: usize, limit: usize },

    #[error("unsupported dimension: {0}")]
    Dimension(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
