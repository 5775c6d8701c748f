//! Simulation and analysis of photonic CHSH experiments, with a
//! likelihood-ratio test for apparent signaling.

pub mod error;
pub mod io;
pub mod model;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
