use thiserror::Error;

/// Failures reported by the engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (relative defect {defect:.3e})")]
    NonHermitian { defect: f64 },

    #[error("time {t} lies outside the protocol window [{t_start}, {t_end}]")]
    TimeOutOfRange { t: f64, t_start: f64, t_end: f64 },

    #[error("bond {bond} does not exist in a {sites}-site system")]
    InvalidBond { bond: String, sites: usize },

    #[error("splitting ratio undefined: c1 + c2 = 0 (c1 = {c1}, c2 = {c2})")]
    DegenerateSplit { c1: f64, c2: f64 },

    #[error("the site-0 level never crosses u = 1 inside the protocol window")]
    NoCrossing,

    #[error("adaptive step fell to {dt:.3e} at t = {t}")]
    StepUnderflow { t: f64, dt: f64 },

    #[error("adiabatic branch continuation failed at t = {t} (overlap {overlap:.6})")]
    BranchAmbiguity { t: f64, overlap: f64 },

    #[error("two-level reduction invalid: {0}")]
    ReductionInvalid(String),

    #[error("initial state has norm {norm}, expected 1")]
    UnnormalizedState { norm: f64 },

    #[error("counting-field grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("protocol is not periodic: |H(t_end) - H(t_start)| = {mismatch:.3e}")]
    ProtocolNotPeriodic { mismatch: f64 },

    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
