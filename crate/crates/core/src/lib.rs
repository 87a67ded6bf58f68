//! Adaptive reservation-slot access for machine-type reporting in an
//! 802.11ah-style cell.
//!
//! Stations share preallocated reservation slots (RSs) in groups of `omega`.
//! The access point counts the collided RSs of the preallocated pool and picks
//! either contention-based resolution (two frame slotted ALOHA frames followed
//! by a contention-free fallback) or immediate contention-free resolution when
//! the count points at a synchronous alarm.
//!
//! The crate is split into:
//! - [`traffic`]: station placement, spatially correlated alarm propagation,
//!   the coupled Markov-modulated Poisson station model and Beta fitting of
//!   activation curves.
//! - [`analysis`]: closed forms for collision, resolution and detection
//!   probabilities and the expected pool cost.
//! - [`simulator`]: pool-level protocol simulation with cost, delay and
//!   reliability accounting.
//! - [`optimizer`]: grid sweeps over the protocol parameters.
//! - [`config`]: the key-value scenario file.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
mod error;
pub mod optimizer;
pub mod rng;
pub mod simulator;
pub mod traffic;

pub use error::{Error, Result};
