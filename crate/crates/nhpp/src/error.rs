use thiserror::Error;

/// Errors produced by model construction, fitting, and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} outside the observation window [0, {window_end}]")]
    OutOfWindow { t: f64, window_end: f64 },

    #[error("invalid basis specification: {0}")]
    InvalidBasis(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rate is zero at event time {t}; objective is not differentiable there")]
    ZeroRateAtEvent { t: f64 },

    #[error(
        "observation window {series} does not match the basis domain end {basis}; \
         refit or rebuild the basis on the correct window"
    )]
    WindowMismatch { series: f64, basis: f64 },

    #[error("mixture component {component} collapsed (total responsibility {total:.3e})")]
    ComponentCollapse { component: usize, total: f64 },

    #[error("all {restarts} EM restarts failed: {last}")]
    AllRestartsFailed { restarts: usize, last: String },

    #[error("thinning ceiling violated at t={t}: rate {rate} exceeds ceiling {ceiling}")]
    CeilingViolation { t: f64, rate: f64, ceiling: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
