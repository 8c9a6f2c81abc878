use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter falls outside the region where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric (asymmetry {asymmetry:e} exceeds {tolerance:e})")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e}, threshold {threshold:e})")]
    NotPositiveDefinite { min_eigenvalue: f64, threshold: f64 },

    #[error("invalid matrix data: {0}")]
    InvalidMatrix(String),

    /// A denominator Pochhammer symbol vanished in a hypergeometric series.
    #[error("pole: {0}")]
    Pole(String),

    #[error("partition weight {weight} exceeds table degree cap {kmax}")]
    CapExceeded { weight: usize, kmax: usize },

    #[error("zonal table construction failed: {0}")]
    Construction(String),

    #[error("integrand returned a non-finite value ({value}) on the support")]
    NonfiniteIntegrand { value: f64 },

    #[error("rejection sampler envelope failure: {0}")]
    Envelope(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
