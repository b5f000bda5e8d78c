use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite Hamiltonian coefficient at t = {t}")]
    NonFinite { t: f64 },

    #[error("degenerate spectrum at t = {t}")]
    Degenerate { t: f64 },

    /// The counterdiabatic oscillator term inverts the trap.
    #[error("trap inversion at t = {t} (omega^2 = {omega_sq}, bound = {bound})")]
    TrapInversion { t: f64, omega_sq: f64, bound: f64 },

    #[error("Ermakov scale collapsed to b = {b} at t = {t}")]
    ErmakovCollapse { t: f64, b: f64 },

    #[error("Wronskian drift {drift:e} exceeds tolerance after {steps} steps")]
    WronskianDrift { drift: f64, steps: usize },

    #[error("photon-number tail {tail:e} beyond cutoff {cutoff} exceeds 1e-12; increase the cutoff")]
    CutoffTail { tail: f64, cutoff: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
