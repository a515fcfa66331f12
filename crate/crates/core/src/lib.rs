//! Simulation and analysis of a single-atom maser: a transmon pumped at half
//! its g→f frequency, decaying through a lossy auxiliary cavity and emitting
//! into a high-Q reservoir cavity.

pub mod device;
pub mod error;
pub mod fock;
pub mod lindblad;
pub mod probe;
pub mod spectrum;
pub mod analytics;
pub mod calibration;
pub mod config;
pub mod sweep;
mod linalg;

pub use device::{DeviceParams, DriveParams, MaserModel};
pub use error::{Error, Result};
pub use fock::{Operator, Slot, TruncationConfig};
pub use lindblad::{DensityMatrix, Superoperator};
pub use linalg::{unvectorize, vectorize};

pub use faer::c64;
