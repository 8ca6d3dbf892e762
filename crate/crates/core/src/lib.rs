//! Numerical laboratory for the exponentially small splitting of the
//! one-dimensional invariant manifolds of L3 in the planar circular
//! restricted three-body problem.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checks;
pub mod coords;
pub mod error;
pub mod inner;
pub mod manifolds;
pub mod numerics;
pub mod pendulum;
pub mod rpc3bp;

pub use error::{Error, Result};
