use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sector: {photons} photons cannot fit on {sites} sites with cap {n_max}")]
    EmptySector { sites: usize, photons: usize, n_max: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("time {t} outside path duration [0, {duration}]")]
    TimeOutOfRange { t: f64, duration: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("perturbative elimination needs a nonzero interaction (U = 0)")]
    ZeroInteraction,

    #[error("Krylov propagator did not converge: residual {residual:e} at subspace size {dim}")]
    KrylovNoConvergence { residual: f64, dim: usize },

    #[error("time step too large: jump probability {probability:.3e} per step exceeds {limit}")]
    StepTooLarge { probability: f64, limit: f64 },

    #[error("time grids differ between runs being averaged")]
    GridMismatch,

    #[error("root finder did not converge; residuals {residuals:?}")]
    NoConvergence { residuals: Vec<f64> },

    #[error("dense diagonalization limited to dimension {limit}, got {dim}")]
    TooLargeForDense { dim: usize, limit: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
