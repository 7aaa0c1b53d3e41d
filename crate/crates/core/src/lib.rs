//! Decoherence of spatial superpositions by light dark matter.
//!
//! The crate evaluates the complex decoherence rate F(Δx) of a superposed
//! target immersed in the galactic halo, the coherent enhancement from
//! multi-atom scattering, overburden shielding, and the resulting exclusion
//! reach in the (mass, cross-section) plane.

pub mod coherent;
pub mod decoherence;
pub mod error;
pub mod halo;
pub mod quadrature;
pub mod sensitivity;
pub mod shielding;
pub mod special;
pub mod units;

pub use error::{Error, Result};
pub use units::{Dimension, Quantity, Unit, Vector3Q};
