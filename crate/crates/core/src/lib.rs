//! Simulator of a UAV base station that collects data from, and wirelessly
//! charges, ground IoT devices, together with a multi-objective DDPG agent
//! that learns the UAV's flight control.

pub mod channel;
pub mod ddpg;
pub mod env;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod nn;
pub mod power;
pub mod world;

pub use error::{ConfigError, Error, Result};

/// Random generator used everywhere; seedable and serializable.
pub type SimRng = rand_chacha::ChaCha8Rng;
