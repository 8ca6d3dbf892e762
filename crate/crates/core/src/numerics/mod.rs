//! Numerical kernel shared by all modules.

pub mod dd;
pub mod ode;
pub mod quad;
pub mod roots;
pub mod scalar;

pub use dd::DoubleDouble;
pub use scalar::{Precision, Real};
