//! Sequential peer-review mechanisms: the mechanism framework and its
//! concrete instances, exact truthfulness oracles, Monte-Carlo evaluation and
//! threshold optimization, review-data fitting and endogenous-effort analysis.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod effort;
pub mod error;
pub mod eval;
pub mod framework;
pub mod mechanisms;
pub mod model;
pub mod rng;
pub mod stats;
pub mod truth;

pub use error::{Error, Result};
