//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad grid parameters, violated coefficient
    /// bounds, or a broken standing assumption (e.g. c2 >= beta_0).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A time that must lie on the grid does not (shift offsets, sample
    /// times, integrator steps).
    #[error("time {t} is not aligned to grid step {step}")]
    Misaligned { t: f64, step: f64 },

    /// Evaluation outside the path's support.
    #[error("time {t} outside path support [{t_min}, {t_max}]")]
    OutOfSupport { t: f64, t_min: f64, t_max: f64 },

    /// The path grid is too short for a requested truncation or pullback
    /// depth; `needed` is a best-effort estimate of the support required.
    #[error("path support {available} too short: {what} needs about {needed}")]
    InsufficientSupport {
        what: &'static str,
        available: f64,
        needed: f64,
    },

    /// Operation called outside its parameter domain (e.g. a positive-lambda
    /// branch requested at lambda <= 0).
    #[error("domain error: {0}")]
    Domain(String),

    /// A pullback endpoint sequence moved the wrong way beyond tolerance.
    #[error(
        "monotonicity violation at pullback time {t}: {value} vs previous {previous} (slack {slack})"
    )]
    MonotonicityViolation {
        t: f64,
        value: f64,
        previous: f64,
        slack: f64,
    },

    /// A pullback or scan failed to settle within the available schedule.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// A trace does not cover the window an operation needs.
    #[error("trace coverage too short: {0}")]
    Coverage(String),

    /// The integrator scheme broke an invariant it asserts per step.
    #[error("scheme violation at t = {t}: {what}")]
    Scheme { what: &'static str, t: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Corrupt or incompatible path cache file.
    #[error("path cache error: {0}")]
    Cache(String),
}

impl Error {
    /// Process exit code of the category: 2 for configuration violations,
    /// 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 1,
        }
    }
}
