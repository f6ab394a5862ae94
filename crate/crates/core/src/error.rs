use thiserror::Error;

/// Errors raised anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("torsion evaluates to a non-finite value at u1 = {u1}")]
    NonFiniteTau { u1: f64 },

    #[error("curve data not finite at u1 = {u1}: {what}")]
    NonFiniteCurve { u1: f64, what: &'static str },

    #[error("frame orthonormality defect {defect:e} exceeds 1e-8 at u1 = {u1}")]
    FrameDrift { u1: f64, defect: f64 },

    #[error("grid must be strictly increasing and inside the curve domain: {0}")]
    InvalidGrid(String),

    #[error("tube coordinates are not injective at u1 = {u1} (1 - kappa*n = {margin:e} at u2 = {u2}, u3 = {u3})")]
    InvalidTube { u1: f64, u2: f64, u3: f64, margin: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (worst residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },

    #[error("mode tracking ambiguous between u1 = {u1_prev} and u1 = {u1_next}: best overlap {overlap:.3} for mode {mode}")]
    TrackingAmbiguity { u1_prev: f64, u1_next: f64, mode: usize, overlap: f64 },

    #[error("series expansion outside its domain: max |kappa * n| = {value:.4} >= 1 at u1 = {u1}")]
    SeriesDomain { u1: f64, value: f64 },

    #[error("series order {order} exceeds the moment table cap {cap}")]
    OrderTooHigh { order: usize, cap: usize },

    #[error("merged-kinetic tier requires primed matrices; run merge_kinetic first")]
    MissingPrimedMatrices,

    #[error("closed form `{requested}` requested for a cross-section without that deformation")]
    PresetMismatch { requested: &'static str },

    #[error("matrix is not positive definite (eigenvalue {eigenvalue:e})")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("unitarity correction {correction:e} exceeds 1e-6 at step {step}")]
    UnitarityDrift { step: usize, correction: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("3D grid has {points} points, above the cap of {cap}")]
    MemoryCap { points: usize, cap: usize },

    #[error("invalid tier: {0}")]
    InvalidTier(String),

    #[error("invalid configuration at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("hellmann-feynman estimate unavailable: {0}")]
    NoPotentialDerivative(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { key: key.into(), message: message.into() }
    }

    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::Parse(_)
                | Error::InvalidTier(_)
                | Error::InvalidGrid(_)
                | Error::InvalidTube { .. }
                | Error::MemoryCap { .. }
                | Error::PresetMismatch { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
