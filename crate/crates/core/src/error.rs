use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite result: {0}")]
    NonFinite(String),

    #[error("|w| = {0:e} too close to the pole at w = 0")]
    DivisionNearZero(f64),

    #[error("imaginary residue {residue:e} exceeds {limit:e}; grid too coarse")]
    ResidueTooLarge { residue: f64, limit: f64 },

    #[error("samples cover {covered:.3} of the {required:.3} wide support region (need at least half)")]
    InsufficientSupport { covered: f64, required: f64 },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    DivergedLoss { epoch: usize, loss: f64 },

    #[error("sample pool is empty")]
    EmptyPool,

    #[error("parse error on line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("quotes carry different maturities ({0} and {1})")]
    MixedMaturities(f64, f64),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("optimizer did not converge within {0} evaluations")]
    NoConvergence(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::DivisionNearZero(_)
                | Error::ResidueTooLarge { .. }
                | Error::DivergedLoss { .. }
                | Error::NoConvergence(_)
        )
    }
}
