use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("ill-conditioned lattice: {0}")]
    IllConditionedLattice(String),
    #[error("numerical blowup: {0}")]
    NumericalBlowup(String),
    #[error("incompatible grid: {0}")]
    IncompatibleGrid(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("eigensolver did not converge: {0}")]
    EigenNonConvergence(String),
    #[error("scan quality: {0}")]
    ScanQuality(String),
}

pub type Result<T> = std::result::Result<T, Error>;
