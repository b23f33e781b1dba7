// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod discrete_ops;
pub mod error;
pub mod geometry;
pub mod moments;
pub mod montecarlo;
pub mod numeric;
pub mod spectral;
pub mod stieltjes;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
