use thiserror::Error;

use crate::state::LinkId;

/// Errors produced by the analysis, simulation and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("charge increment {m} exceeds storage headroom {headroom}")]
    IncrementExceedsHeadroom { m: u32, headroom: u32 },

    #[error("link {0} is not available in the current state")]
    UnavailableLink(LinkId),

    #[error("state has no available links (deadlock)")]
    Deadlock,

    #[error("availability vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("state space has {count} states, above the cap of {cap}")]
    StateCapExceeded { count: u128, cap: u64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("restricted chain is reducible: {closed_classes} closed classes reachable from the start state")]
    Reducible { closed_classes: usize },

    #[error("linear system is singular")]
    Singular,

    #[error(
        "power iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NotConverged { iterations: usize, residual: f64 },

    #[error("stationary routes disagree: {direct} vs {closed_form}")]
    RouteMismatch { direct: f64, closed_form: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("invalid experiment: {0}")]
    Experiment(String),

    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
