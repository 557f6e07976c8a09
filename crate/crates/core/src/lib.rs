//! Hierarchical recurrent forecasting: per-node GRUs tied together by
//! parent-centred Gaussian priors (HRNN) or by frozen parent and child anchors
//! (BiHRNN), together with classical baselines, accuracy metrics and a
//! rolling-origin evaluation harness.
//!
//! The crate is `no_std` and only needs an allocator; file formats, the CLI
//! and parallel scheduling live in the `hrnn` companion crate.

#![no_std]
// `!(x > 0.0)` style checks are how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod exec;
pub mod forecast;
pub mod gradcheck;
pub mod gru;
pub mod hierarchy;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod seed;

pub use error::{Error, Result};
pub use hierarchy::{Hierarchy, NodeId};
