use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub epochs_per_batch: usize,
    /// Transitions per minibatch; with an LSTM this is rounded down to
    /// whole `bptt_chunk` sequences.
    pub minibatch_size: usize,
    pub rollout_length: usize,
    pub n_workers: usize,
    pub lr: f64,
    pub adam_eps: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub bptt_chunk: usize,
    pub max_env_steps: u64,
    pub convergence_return: f64,
    pub convergence_window: usize,
    pub max_grad_norm: f64,
    pub exec: Exec,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            epochs_per_batch: 4,
            minibatch_size: 1024,
            rollout_length: 128,
            n_workers: 16,
            lr: 2.5e-4,
            adam_eps: 1e-5,
            value_coef: 0.5,
            entropy_coef: 0.01,
            bptt_chunk: 32,
            max_env_steps: 5_000_000,
            convergence_return: 0.8,
            convergence_window: 100,
            max_grad_norm: 0.5,
            exec: Exec::Parallel,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self, recurrent: bool) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} not in [0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("gae_lambda {} not in [0, 1]", self.gae_lambda));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad(format!("clip_eps {} not in (0, 1)", self.clip_eps));
        }
        for (name, v) in [
            ("epochs_per_batch", self.epochs_per_batch),
            ("minibatch_size", self.minibatch_size),
            ("rollout_length", self.rollout_length),
            ("n_workers", self.n_workers),
            ("bptt_chunk", self.bptt_chunk),
            ("convergence_window", self.convergence_window),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.adam_eps > 0.0) {
            return bad("lr and adam_eps must be positive".into());
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm must be positive".into());
        }
        if recurrent && self.rollout_length % self.bptt_chunk != 0 {
            return bad(format!(
                "rollout_length {} is not a multiple of bptt_chunk {}",
                self.rollout_length, self.bptt_chunk
            ));
        }
        Ok(())
    }

    pub fn batch_size(&self) -> usize {
        self.rollout_length * self.n_workers
    }
}
