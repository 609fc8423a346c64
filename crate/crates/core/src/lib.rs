//! Biomarker combination rules that maximize the true positive rate subject
//! to a positive-predictive-value constraint.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod doolr;
pub mod error;
pub mod glm;
pub mod harness;
pub mod itdoolr;
mod linalg;
pub mod oracle;
pub mod plugin;
pub mod rng;
pub mod simgen;
pub mod surrogate;
pub mod types;

pub use error::{Error, Result};
pub use types::*;
