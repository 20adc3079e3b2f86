//! Fully dynamic weighted submodular cover.
//!
//! Maintains a bicriteria approximate minimum-cost cover of a monotone submodular
//! function while elements are inserted and deleted, measuring cost in oracle
//! calls. See [`runs::RunPool`] for the entry point.

// `!(x >= lo)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod harness;
pub mod levels;
pub mod oracle;
pub mod runs;
pub mod verify;

pub use error::{Error, Result};
pub use oracle::{ElementId, Objective};
