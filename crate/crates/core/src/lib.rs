#![no_std]
// `!(x > 0.0)` is used deliberately so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Variance attribution and model-uncertainty analysis for linear-Gaussian
//! process networks.
//!
//! The crate is `no_std` with `alloc`; file formats and the command-line
//! front end live in the `bn-shapley` crate.

extern crate alloc;

pub mod data;
pub mod inference;
pub mod model;
pub mod mu_sa;
pub mod numeric;
pub mod propagate;
pub mod rng;
pub mod shapley;
pub mod simgen;
