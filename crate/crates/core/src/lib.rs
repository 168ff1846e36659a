//! Network epidemic simulation, its age-structured SIR mean-field limit,
//! and phase-wise estimation of contact rates from case counts.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataio;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod model;
pub mod phase;
pub mod scenario;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
