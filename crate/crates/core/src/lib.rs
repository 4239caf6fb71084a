//! Traveling fronts of the delayed nonlocal Nicholson blowflies equation.
//!
//! The crate computes critical speeds from the dispersion relation, wave
//! profiles by a viscosity-regularized fixed-point scheme, time evolution in
//! the moving frame, and an independent Fourier-side solution of the linear
//! comparison equation used to check decay rates.

pub mod characteristic;
pub mod convolution;
pub mod tridiag;
pub mod waveprofile;
pub mod evolution;
pub mod analysis;
pub mod delaycalc;
pub mod scenario;
pub mod error;
pub mod model;

pub use error::{Error, Result};
