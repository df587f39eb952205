use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{AgentConfig, AgentNet};
use crate::env::RoomConfig;
use crate::error::{Error, Result};
use crate::nn::AdamState;
use crate::par;

use super::rollout::{collect_rollout, RolloutState};
use super::update::ppo_update;
use super::PpoConfig;

pub const METRICS_HEADER: &str = "iter,env_steps,mean_return,mean_ep_len,policy_loss,value_loss,entropy,clip_frac";

/// One row per PPO iteration. Return and length are means over the most
/// recent `convergence_window` finished episodes (NaN before the first).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub iter: usize,
    pub env_steps: u64,
    pub mean_return: f64,
    pub mean_ep_len: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
}

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.iter,
            self.env_steps,
            self.mean_return,
            self.mean_ep_len,
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.clip_frac
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainStatus {
    Converged,
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub status: TrainStatus,
    pub final_net: AgentNet<f32>,
    /// Parameters at the highest full-window mean return (the final ones
    /// if the window never filled).
    pub best_net: AgentNet<f32>,
    pub best_return: f64,
    pub final_return: f64,
    pub env_steps: u64,
    pub metrics: Vec<MetricsRow>,
}

/// Collect, estimate advantages and update until the windowed mean return
/// reaches `convergence_return` or `max_env_steps` is spent. Writes nothing
/// to disk; `on_iter` sees every metrics row as it is produced. Sets the
/// process-wide GEMM execution mode to `cfg.exec`.
pub fn train(
    room: &RoomConfig,
    agent: &AgentConfig,
    cfg: &PpoConfig,
    seed: u64,
    mut on_iter: impl FnMut(&MetricsRow),
) -> Result<TrainOutcome> {
    room.validate()?;
    agent.validate()?;
    cfg.validate(agent.lstm)?;
    if agent.n_actions != room.n_actions() || agent.crop_size != room.crop_size {
        return Err(Error::Config("agent and room disagree on actions or crop size".into()));
    }
    if agent.use_full_map && !room.full_map {
        return Err(Error::Config("agent expects a full map the room does not provide".into()));
    }
    par::set_gemm_exec(cfg.exec);
    let mut net = AgentNet::<f32>::build(agent, seed)?;
    let mut adam = AdamState::with_betas(net.params().values(), cfg.lr, 0.9, 0.999, cfg.adam_eps);
    let mut workers = RolloutState::new(room, &net, cfg.n_workers, seed.wrapping_add(1))?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);

    let window = cfg.convergence_window;
    let mut recent: VecDeque<(f64, u32)> = VecDeque::with_capacity(window);
    let mut env_steps = 0u64;
    let mut metrics = Vec::new();
    let mut best: Option<(f64, AgentNet<f32>)> = None;
    let mut status = TrainStatus::BudgetExhausted;

    while env_steps < cfg.max_env_steps {
        let batch = collect_rollout(&mut workers, &net, cfg.rollout_length, cfg.bptt_chunk, cfg.exec)?;
        env_steps += batch.len() as u64;
        for ep in &batch.episodes {
            if recent.len() == window {
                recent.pop_front();
            }
            recent.push_back((ep.ret, ep.len));
        }
        let report = ppo_update(&mut net, &mut adam, &batch, cfg, &mut shuffle_rng)?;
        let (mean_return, mean_ep_len) = if recent.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let n = recent.len() as f64;
            (
                recent.iter().map(|e| e.0).sum::<f64>() / n,
                recent.iter().map(|e| e.1 as f64).sum::<f64>() / n,
            )
        };
        let row = MetricsRow {
            iter: metrics.len(),
            env_steps,
            mean_return,
            mean_ep_len,
            policy_loss: report.policy_loss,
            value_loss: report.value_loss,
            entropy: report.entropy,
            clip_frac: report.clip_fraction,
        };
        on_iter(&row);
        metrics.push(row);
        if recent.len() == window {
            if best.as_ref().is_none_or(|(r, _)| mean_return > *r) {
                best = Some((mean_return, net.clone()));
            }
            if mean_return >= cfg.convergence_return {
                status = TrainStatus::Converged;
                break;
            }
        }
    }
    let final_return = metrics.last().map_or(f64::NAN, |m| m.mean_return);
    let (best_return, best_net) = best.unwrap_or_else(|| (final_return, net.clone()));
    Ok(TrainOutcome {
        status,
        final_net: net,
        best_net,
        best_return,
        final_return,
        env_steps,
        metrics,
    })
}
