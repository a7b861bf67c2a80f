//! Simulation and numerical verification toolkit for the one-dimensional
//! random walk in an iid random environment, transient to the right.
//!
//! The crate is organised bottom-up:
//!
//! * [`env_model`]: environment laws, the cumulant `Λ(s) = log E A^s`, the
//!   tail index `α` and the rate function `Λ*`.
//! * [`walk_sim`]: the quenched walk with hitting-time bookkeeping.
//! * [`branching`]: the branching process with immigration that encodes the
//!   walk's left steps, its regeneration cycles and block decomposition.
//! * [`perpetuity`]: forward/backward affine recursions, the Kesten–Goldie
//!   constant and exponentially tilted product tails.
//! * [`constants`]: regenerative estimators of the large-deviation constants.
//! * [`harness`]: configuration, parallel replica drivers and CSV reports.

pub mod branching;
pub mod constants;
pub mod env_model;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod parallel;
pub mod perpetuity;
pub mod rng;
pub mod stats;
pub mod walk_sim;

pub use env_model::{CumulantProfile, DeviationWindow, EnvSpec, Regime};
pub use error::{Error, Result};
pub use rng::RngStream;
