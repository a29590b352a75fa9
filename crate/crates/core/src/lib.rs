//! Hierarchical task control for unicycle fleets, mixing PD laws with a
//! sampling-based path-integral controller on one level.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynsim;
pub mod error;
pub mod harness;
pub mod hiercore;
pub mod oracle;
pub mod parallel;
pub mod picore;
pub mod tasklib;

pub use error::{Error, HarnessError, Result};
