//! Cyclically symmetric SU(2) monopole chains, reconstructed from spectral
//! data through the cylinder Higgs bundle, the affine Toda equations and the
//! numerical Nahm transform.

pub mod ansatz;
pub mod eigen;
pub mod error;
pub mod nahm;
pub mod scalar;
pub mod sparse;
pub mod spectral;
pub mod toda;

pub use error::{Error, Result};
