//! Minimization of the thin-sheet energy `E_h` over maps of the unit disk whose
//! boundary values trace a unit-speed spherical curve, together with the
//! analysis tools used to study the logarithmic energy scaling of the
//! resulting developable-cone configurations.
//!
//! Every numerical type is generic over [`Real`]; the aliases at the crate
//! root fix the scalar to `f64`, which is what the command-line tool uses.

pub mod banded;
pub mod cone;
pub mod curve;
pub mod energy;
pub mod error;
pub mod estimates;
pub mod mesh;
pub mod polar;
pub mod quadrature;
pub mod scalar;
pub mod solve;
pub mod spectral;
pub mod study;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Curve = curve::BoundaryCurve<f64>;
