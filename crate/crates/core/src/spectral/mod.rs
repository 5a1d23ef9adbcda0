//! Divergence-free spectral fields, the Stokes operator and its semigroup,
//! the Leray projection, the convective term and the norms used throughout.

pub mod calibrate;
mod field;
mod model;
mod noise;
mod physical;
pub mod snapshot;

pub use field::{Coefficients, SpectralField};
pub use model::{Backend, ModelSpec, Parity, RealMode, StokesModel};
pub use noise::NoiseOperator;
