//! Stochastic simulation of a closed V-type three-level system driven by two
//! uncorrelated, partially coherent optical fields.
//!
//! * [`field`] samples phase-noise fields and estimates their correlations.
//! * [`white_noise`] solves the averaged rate equations for white-noise pumping.
//! * [`quantum`] holds the density matrix, Hamiltonian and propagators.
//! * [`ensemble`] averages many trajectories into the physical state.
//! * [`scenario`] is the configuration, preset and output layer used by the CLI.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod error;
pub mod field;
pub mod grid;
pub mod observables;
pub mod parallel;
pub mod quantum;
pub mod rng;
pub mod scenario;
pub mod stats;
pub mod units;
pub mod white_noise;

pub use error::{Error, Result};
pub use grid::TimeGrid;
