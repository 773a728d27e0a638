//! Analytic loop-kernel performance modeling: machine and kernel
//! descriptions, cache-hierarchy traffic, single-core runtime prediction,
//! multicore scaling and composition of whole applications.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compose;
pub mod error;
pub mod exec;
pub mod format;
pub mod hierarchy;
pub mod kernel;
pub mod machine;
mod num;
pub mod ops;
pub mod predictor;
pub mod scaling;
pub mod traffic;

pub use error::{Error, Result};
