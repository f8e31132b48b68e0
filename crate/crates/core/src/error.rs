use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the operation (negative frequency,
    /// time outside the protocol window, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("quadrature did not converge: estimated error {residual:e} exceeds tolerance {tolerance:e}")]
    Quadrature { residual: f64, tolerance: f64 },

    #[error("bond dimension {requested} at memory layer {step} exceeds the cap of {cap}")]
    BondCap {
        step: usize,
        requested: usize,
        cap: usize,
    },

    #[error("structural mismatch: {0}")]
    Structure(String),

    #[error("need at least m_max = {required} counting samples, have {available}")]
    InsufficientSamples { required: usize, available: usize },

    #[error(
        "characteristic function has not decayed at chi_max: |phi| = {magnitude:e} after the envelope; \
         increase m_max or the envelope rate"
    )]
    InsufficientDecay { magnitude: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("process tensor cache: {0}")]
    Cache(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("fingerprint mismatch in {path}: expected {expected}, found {found}")]
    Fingerprint {
        path: String,
        expected: String,
        found: String,
    },

    #[error(transparent)]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
