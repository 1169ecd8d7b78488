//! Simulation and Bayesian inference for marked Hawkes cascades on latent
//! multiplex networks.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod generative;
pub mod inference;
pub mod io;
pub mod model;

pub use error::{Error, Result};
