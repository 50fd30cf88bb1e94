//! Deterministic discrete-event simulator for asynchronous federated learning
//! over LEO satellite constellations with HAP or ground-station parameter
//! servers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod config;
pub mod error;
pub mod fl;
pub mod link;
pub mod orbital;
pub mod propagation;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
