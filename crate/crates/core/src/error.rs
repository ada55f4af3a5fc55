//! Error type shared across the library.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An error coordinate reached or crossed its barrier half-width, where
    /// the barrier functions are singular.
    #[error("barrier domain violated on channel {channel}: |z| = {z:.6} >= k = {k:.6}")]
    Domain { channel: usize, z: f64, k: f64 },

    /// A computed quantity was NaN or infinite.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// Invalid configuration (gains, barrier parameters, dimensions, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A control-gain denominator dropped below the safe magnitude.
    #[error("gain g{channel} vanishes (|g| = {magnitude:.3e}); refusing to divide")]
    VanishingGain { channel: usize, magnitude: f64 },

    /// The simulation state left the admissible region mid-run.
    #[error("constraint breach on channel {channel} at t = {t:.6}")]
    ConstraintBreach { channel: usize, t: f64 },

    /// The integrated state became NaN or infinite.
    #[error("non-finite state at t = {t:.6}")]
    NonFiniteState { t: f64 },

    /// The initial condition violates the admissibility hypothesis.
    #[error("inadmissible initial condition on channel {channel}: |z(0)| = {z0:.6} >= k = {k:.6}")]
    InadmissibleInitialCondition { channel: usize, z0: f64, k: f64 },

    /// The adaptive integrator could not meet its tolerances.
    #[error("step size underflow at t = {t:.6}")]
    StepSizeUnderflow { t: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
