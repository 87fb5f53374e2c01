//! LEO and GNSS carrier-phase positioning simulation and estimation.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ambiguity;
pub mod error;
pub mod experiment;
pub mod link;
pub mod measurement;
pub mod orbit;
pub mod output;
pub mod phase;
pub mod positioning;
pub mod scenario;

pub use error::{Error, Result};
