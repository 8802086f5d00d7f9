//! Multinomial logit models with neural additive utilities.
//!
//! Utilities can be linear, generalized additive networks (one small network
//! per variable), additive networks with selected pairwise interactions, or
//! one dense network per alternative. The crate covers estimation, pair
//! selection, cross-validation, the synthetic bus/taxi experiment and
//! policy sweeps.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod mnl;
pub mod numcore;
pub mod training;
pub mod utility;

pub use error::{Error, Result};
