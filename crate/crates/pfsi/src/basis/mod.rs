//! Trigonometric bases in time and space and the spectral field types built
//! on top of them.

pub mod beam;
pub mod field;
pub mod fluid;
pub mod fourier;
pub mod grid;
pub mod time;

pub use beam::BeamBasis;
pub use field::{
    dealiased_product1, dealiased_product3, BeamExpansion, BeamField, BeamGrid, Deriv,
    FluidField, ScalarExpansion, VectorExpansion, WorkGrid,
};
pub use fluid::{FluidBasis, FluidMode};
pub use fourier::Fourier1d;
pub use grid::Grid1d;
pub use time::TimeBasis;
