//! Conditional latency tail-probability prediction.
//!
//! A fully connected network maps a transmission-condition vector to the
//! parameters of a latency density: either a Gaussian mixture (GMM head) or a
//! Gaussian mixture spliced at a learned threshold with a Generalized Pareto
//! tail (GMEVM head). The crate covers the densities themselves, the network
//! with its likelihood and exact gradients, Adam training with a staged
//! learning-rate schedule, seeded ensembles, synthetic ground-truth data and
//! tail-focused evaluation.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod dist;
pub mod error;
pub mod eval;
pub mod model;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
