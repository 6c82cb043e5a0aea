use thiserror::Error;

use crate::model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("infeasible parameters: {}", format_violations(.0))]
    Infeasible(Vec<Violation>),

    #[error("{0} is only defined for arithmetic Brownian motion")]
    UnsupportedDiffusion(&'static str),

    #[error("working interval [{lo}, {hi}] does not contain 0")]
    IntervalExcludesZero { lo: f64, hi: f64 },

    #[error("fundamental solution construction failed at x = {x}: {detail}")]
    Construction { x: f64, detail: String },

    #[error("singular linear system at x = {x} (determinant {det})")]
    SingularSystem { x: f64, det: f64 },

    #[error("no band in scan window: {0}")]
    NoBracket(String),

    #[error(
        "Newton iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NotConverged { iterations: usize, residual: f64 },

    #[error(
        "barrier ordering violated: x_lower = {x_lower}, x_star = {x_star}, x_upper = {x_upper}"
    )]
    Ordering {
        x_lower: f64,
        x_star: f64,
        x_upper: f64,
    },

    #[error("non-finite state on path {path} at step {step}")]
    NonFinitePath { path: u64, step: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
