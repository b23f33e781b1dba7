// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Batch driver for the mspec pipelines: config parsing, pipeline runs with
//! manifests, and spectral table comparison.

pub mod compare;
pub mod config;
pub mod error;
pub mod run;

pub use compare::{compare_spectra, CompareReport};
pub use config::{Pipeline, RunConfig};
pub use error::CliError;
pub use run::{run, RunOutcome};

/// Exit status for a run whose checks failed under `--strict`.
pub const EXIT_CHECK_FAILED: u8 = 1;
/// Exit status for configuration, input and pipeline errors.
pub const EXIT_ERROR: u8 = 2;
