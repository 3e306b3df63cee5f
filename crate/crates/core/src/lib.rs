//! Core engine for system-optimal, demand-robust path recommendations during
//! public transit disruptions: an event-based capacity-constrained simulator,
//! a one-run linearization of system travel time, demand uncertainty sets
//! with their conic robust counterpart, and the successive-averages loop that
//! ties them together.

#![allow(clippy::needless_range_loop)]

pub mod benchmarks;
pub mod error;
pub mod evaluate;
pub mod gradient;
pub mod model;
pub mod numeric;
pub mod optimizer;
pub mod scenario;
pub mod simulator;
pub mod synth;
pub mod uncertainty;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
