//! Gaussian-process emulation of simulators with discontinuous response
//! surfaces: a One-versus-Rest EP classifier finds the region boundaries,
//! a GP regressor emulates the surface inside the valid region, and active
//! learning chooses where to run the simulator.

pub mod active;
pub mod classification;
pub mod emulator;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod optimize;
pub mod regression;
pub mod simulators;

pub use error::{Error, Result};
