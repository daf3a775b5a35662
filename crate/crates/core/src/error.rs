use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("event cap of {cap} exceeded at t = {time} (request infeasible at this scale)")]
    EventCapExceeded { cap: u64, time: f64 },

    #[error("time {time} lies outside [0, {horizon}]")]
    OutsideHorizon { time: f64, horizon: f64 },

    #[error("non-finite value in {context} at t = {time}")]
    NonFinite { context: &'static str, time: f64 },

    #[error("fluid solution went negative ({value}) at t = {time}")]
    NegativeFluid { value: f64, time: f64 },

    #[error("no steady state in range [0, {upper}]")]
    NoSteadyState { upper: f64 },

    #[error("truncation K = {k} below the floor {floor} for mean {mean}")]
    TruncationTooSmall { k: usize, floor: usize, mean: f64 },

    #[error("truncated tail mass {mass:e} exceeds {limit:e}; increase K (currently {k})")]
    TailMass { mass: f64, limit: f64, k: usize },

    #[error("residual undefined at the truncation boundary k = {k}")]
    BoundaryResidual { k: usize },

    #[error("singular linear system (determinant {det})")]
    Singular { det: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name: name.into(), reason: reason.into() }
    }
}
