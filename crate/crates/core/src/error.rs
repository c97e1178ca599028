use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("expected a {expected} field, got a {found} field")]
    WrongRepresentation {
        expected: &'static str,
        found: &'static str,
    },

    #[error("grids do not match")]
    GridMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("scale {l} outside the supported range [{min}, {max}]")]
    ScaleOutOfRange { l: i32, min: i32, max: i32 },

    #[error("field is not band-limited: {0}")]
    BandViolation(String),

    #[error("field is not real: imaginary part {0:e} exceeds tolerance")]
    NotReal(f64),

    #[error("multiplier symbol is not finite at frequency {0:?}")]
    SymbolNotFinite(Vec<f64>),

    #[error("trajectory error: {0}")]
    Trajectory(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
