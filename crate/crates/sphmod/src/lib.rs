//! Moduli of smoothness defined through Euler angles on the unit sphere,
//! their ball and simplex counterparts, and near-best polynomial
//! approximation by smoothed kernels.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approximation;
pub mod core_math;
pub mod error;
pub mod poly;
pub mod quadrature;
pub mod rates;
pub mod smoothness;
pub mod verify;

pub use error::{Error, Result};
