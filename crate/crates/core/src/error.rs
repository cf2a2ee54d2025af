use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operator is not Hermitian (max |H - H^dagger| = {defect:.3e})")]
    NonHermitian { defect: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("t = {t} us lies outside the profile domain [0, {duration}] us")]
    Domain { t: f64, duration: f64 },

    #[error("singular energy denominator at J = {j} (level crossing)")]
    Singularity { j: f64 },

    #[error("search bracket [{lo}, {hi}] does not contain a gap minimum")]
    NoBracket { lo: f64, hi: f64 },

    #[error("cannot identify eigenstate {what}: best overlap {overlap:.3}")]
    Identification { what: &'static str, overlap: f64 },

    #[error("all level pairs are degenerate below the gap floor {gap_floor:e}")]
    Degeneracy { gap_floor: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("step size underflow at t = {t} us (step {step:.3e} us, local error {error:.3e})")]
    StepSizeUnderflow { t: f64, step: f64, error: f64 },

    #[error("resonance mismatch: peak transfer {peak:.4} within {window} us")]
    ResonanceMismatch { peak: f64, window: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::Io(_) => 4,
            _ => 3,
        }
    }
}
