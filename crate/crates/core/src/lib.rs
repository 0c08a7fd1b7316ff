//! Continuous-time quantum search on spectra with scrambled outputs.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod effective;
pub mod error;
pub mod export;
pub mod interp;
pub mod ode;
pub mod quad;
pub mod scenarios;
pub mod schedule;
pub mod spectrum;

pub use error::{Error, Result};
