//! Simulation and verification toolkit for integrate-and-fire receivers
//! driven by heavy-tailed, round-synchronized input spike trains.

pub mod dynamics;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod input;
pub mod rng;
pub mod rv;
pub mod stats;
pub mod time;

pub use error::{Error, Result};
