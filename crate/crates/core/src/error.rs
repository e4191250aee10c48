use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("every coordinate is zero or non-finite")]
    AllZero,

    #[error("dimension mismatch: expected P^{expected}, got P^{found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("F vanishes at {coords} (sup-norm {norm:e}); the nondegeneracy certificate does not hold here")]
    DegenerateImage { coords: String, norm: f64 },

    #[error("degenerate map ({method}): witness {witness:e} is below {threshold:e}")]
    Degenerate {
        method: &'static str,
        witness: f64,
        threshold: f64,
    },

    #[error("invalid polynomial: {0}")]
    InvalidPolynomial(String),

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("root solver failed: residual {residual:e} exceeds tolerance {tolerance:e}")]
    SolverFailure { residual: f64, tolerance: f64 },

    #[error("exact fiber needs {required} atoms, cap is {cap}")]
    CapExceeded { required: f64, cap: u64 },

    #[error("not supported: {0}")]
    NotSupported(String),

    #[error("measure has no atoms")]
    EmptyMeasure,

    #[error("rate fit needs at least 3 errors above the floor, got {usable}")]
    InsufficientData { usable: usize },

    #[error("base point {point} is exceptional (backward multiplicity rate {rate})")]
    ExceptionalBase { point: String, rate: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
