//! Space-time spectral solver for time-periodic flows of a compressible
//! viscous fluid coupled to a viscoelastic beam through a penalized
//! kinematic interface condition.

pub mod basis;
pub mod density;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod fluid;
pub mod geometry;
pub mod linalg;
pub mod oracles;
pub mod structure;

pub use error::{Error, Result};
