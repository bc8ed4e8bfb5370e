//! Principal eigenvalues and spreading speeds for space-time periodic
//! reaction-diffusion-advection equations of KPP type.

// `!(x > 0.0)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod fields;
pub mod operator;
pub mod eigen;
pub mod variational;
pub mod speed;
pub mod simulate;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
