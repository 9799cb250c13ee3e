use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("quadrature did not converge: achieved {achieved:.3e}, requested {requested:.3e}")]
    QuadratureNotConverged { achieved: f64, requested: f64 },

    #[error("t = {t} lies beyond the tabulated horizon {horizon}")]
    HorizonExceeded { t: f64, horizon: f64 },

    #[error("t = {t} is not a grid point (step {step})")]
    OffGrid { t: f64, step: f64 },

    #[error("incompatible grids: {0}")]
    GridMismatch(String),

    #[error("covariance matrix is not positive definite (det = {det:.3e})")]
    NotPositiveDefinite { det: f64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("response vector vanishes; sensitivity is undefined")]
    ZeroResponse,

    #[error("{what} needs at least {min} samples, got {got}")]
    InsufficientSamples {
        what: &'static str,
        min: usize,
        got: usize,
    },

    #[error("optimum sits at the scan boundary (n = {0}); enlarge n_max")]
    ScanBoundary(u32),
}
