//! Error taxonomy shared by every module in the crate.

use thiserror::Error;

/// Errors raised by measure, model, simulation and solver operations.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("empty input: at least one sample is required")]
    EmptyInput,
    #[error("non-finite value encountered: {0}")]
    NonFiniteValue(f64),
    #[error("alpha out of range: {0} (norm index must be >= 1)")]
    AlphaOutOfRange(f64),
    #[error("transport order out of range: {0} (must be >= 1)")]
    OrderOutOfRange(f64),
    #[error("support too large for exhaustive transport oracle: {0} (max 8)")]
    SupportTooLarge(usize),
    #[error("mismatched supports between distributions")]
    MismatchedSupport,
    #[error("reference distribution has zero mass at point {0}")]
    ZeroMassPoint(usize),
    #[error("control {value} outside box [{lo}, {hi}] for player {player}")]
    ControlOutOfBox {
        player: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("empty measure")]
    EmptyMeasure,
    #[error("unknown measure functional: {0}")]
    UnknownFunctional(String),
    #[error("invalid Gateaux direction: {0}")]
    InvalidDirection(String),
    #[error("non-finite state at particle {particle}, step {step} (blow-up guard)")]
    NonFiniteResult { particle: usize, step: usize },
    #[error("policy output {value} outside box [{lo}, {hi}] for player {player}")]
    PolicyOutOfBox {
        player: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("measure flow grid does not match simulation grid")]
    GridMismatch,
    #[error("too few particles: {0} (need at least 4)")]
    TooFewParticles(usize),
    #[error("ensemble is missing auxiliary cost states for player {0}")]
    MissingAux(usize),
    #[error("exponential overflow in risk functional (theta * psi = {0})")]
    Overflow(f64),
    #[error("degenerate sample: variance is zero")]
    DegenerateSample,
    #[error("regression failed at step {step}: {reason}")]
    RegressionFailure { step: usize, reason: String },
    #[error("v^theta positivity violated at step {step}: min value {min}")]
    NegativeV { step: usize, min: f64 },
    #[error("non-finite adjoint driver at step {0}")]
    NonFiniteDriver(usize),
    #[error("Riccati integration blew up at t = {0}")]
    RiccatiBlowup(f64),
    #[error("Picard reference flow did not converge (last residual {0})")]
    ReferenceNotConverged(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
