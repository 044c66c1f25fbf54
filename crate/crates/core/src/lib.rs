//! Auxiliary particle filters with first-stage weight adaptation.

// `!(x > 0.0)` is used deliberately so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptation;
pub mod analysis;
pub mod error;
pub mod experiment;
pub mod filters;
pub mod format;
pub mod models;
pub mod parallel;
pub mod quadrature;
pub mod resample;
pub mod rng;
pub mod sample;

pub use error::{Error, Result};
