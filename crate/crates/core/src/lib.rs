//! Spectral simulator and verification lab for the incompressible
//! Navier-Stokes equations driven by additive fractional Brownian noise.

pub mod convolution;
pub mod energy;
pub mod error;
pub mod estimates;
pub mod fbm;
pub mod fft;
pub mod quadrature;
pub mod rng;
pub mod runner;
pub mod solver;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};

/// Version string recorded in every manifest.
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
