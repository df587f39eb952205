//! The actor-critic agent and its activation taps.

mod config;
mod net;

pub use config::AgentConfig;
pub use net::{ActivationTaps, AgentNet, Forward, ForwardCache, LstmState, ObsBatch, StepOutput};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::loss::{argmax, categorical, log_softmax};
use crate::nn::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    Sample,
    Greedy,
}

/// Picks an action from policy logits. Greedy ties go to the lowest index.
pub fn select_action<T: Real, R: Rng + ?Sized>(
    logits: &[T],
    rng: &mut R,
    mode: ActionMode,
) -> Result<(usize, T)> {
    match mode {
        ActionMode::Sample => categorical(logits, rng),
        ActionMode::Greedy => {
            crate::nn::ensure_finite(logits, "policy logits")?;
            let a = argmax(logits);
            Ok((a, log_softmax(logits)[a]))
        }
    }
}
