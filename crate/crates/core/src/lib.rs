// Negated float comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod datasets;
pub mod error;
pub mod experiments;
pub mod krr;
pub mod linalg;
pub mod ntk;
pub mod relu_net;
pub mod rng;
pub mod special;
pub mod sphere;

pub use error::{Error, Result};
