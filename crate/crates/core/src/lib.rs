//! Recurrent actor-critic agents in seeded room gridworlds, and probes
//! that test whether the agent's activations encode its own position.

pub mod agent;
pub mod env;
pub mod error;
pub mod io;
pub mod nn;
pub mod par;
pub mod ppo;
pub mod probe;

pub use error::{Error, Result};
