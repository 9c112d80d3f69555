use thiserror::Error;

/// Errors raised by state construction, transforms and checks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cutoff {cutoff} too small: tail population {tail:e} (need < 1e-10)")]
    CutoffTooSmall { cutoff: usize, tail: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("grid too small: boundary |W| = {boundary:e} exceeds {limit:e}")]
    GridTooSmall { boundary: f64, limit: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("Nyquist guard violated: step {step} with dim {dim} (step*sqrt(2*dim) must be < pi)")]
    NyquistViolation { step: f64, dim: usize },

    #[error("normalization error: integral {0} deviates from 1")]
    NormalizationError(f64),

    #[error("integration lines leave the grid while |W| = {0:e} > 1e-8")]
    SupportClipped(f64),

    #[error("degenerate direction: mu = nu = 0")]
    DegenerateDirection,

    #[error("phase {0} not available in tomogram")]
    MissingPhase(f64),

    #[error("moment order {0} exceeds 8")]
    OrderTooHigh(u32),

    #[error("unsupported Hamiltonian: {0}")]
    UnsupportedHamiltonian(String),

    #[error("grid too coarse for residual evaluation: {0}")]
    GridTooCoarse(String),

    #[error("insufficient samples at theta = {theta}: {count} < 100")]
    InsufficientSamples { theta: f64, count: usize },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
