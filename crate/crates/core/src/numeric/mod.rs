//! Numerical support: compensated reductions, double-double arithmetic,
//! small dense kernels and special functions.

pub mod dd;
pub mod dense;
pub mod special;
pub mod sum;

pub use dd::{DoubleDouble, Real};
