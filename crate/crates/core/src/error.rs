use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KostinError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("width collapsed to {a:e} at t = {t} (floor {floor:e})")]
    Singularity { t: f64, a: f64, floor: f64 },

    #[error("step size underflow at t = {t} (h = {h:e}); system too stiff")]
    StepUnderflow { t: f64, h: f64 },

    #[error("integration exceeded {0} steps")]
    TooManySteps(usize),

    #[error(
        "no root of the constants residual in [{lo:e}, {hi:e}]; residual ranged over [{min_residual:e}, {max_residual:e}]"
    )]
    NoSolution {
        lo: f64,
        hi: f64,
        min_residual: f64,
        max_residual: f64,
    },

    #[error("grid too narrow or too coarse: {0}")]
    GridTooNarrow(String),

    #[error("ambiguous phase unwrap between grid points {0} and {1} (jump of magnitude pi)")]
    AmbiguousUnwrap(usize, usize),

    #[error("norm drift {drift:e} in a single step at t = {t}")]
    NormDrift { t: f64, drift: f64 },

    #[error("packet reached the domain boundary at t = {t} (edge density {edge_density:e})")]
    PacketEscaped { t: f64, edge_density: f64 },

    #[error("Wigner quadrature failed: normalization {0}")]
    QuadratureFailure(f64),
}

pub type Result<T> = std::result::Result<T, KostinError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> KostinError {
    KostinError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
