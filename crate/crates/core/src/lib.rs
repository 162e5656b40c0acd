#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod calibration;
pub mod channel;
pub mod config;
pub mod cost;
pub mod error;
pub mod lt;
pub mod protocol;
pub mod rng;
pub mod sim;
pub mod sjde;
pub mod stats;

pub use error::{Error, Result};
