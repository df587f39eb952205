use rand::seq::SliceRandom;
use rand::Rng;

use crate::agent::{AgentNet, LstmState};
use crate::error::Result;
use crate::nn::AdamState;

use super::gae::{compute_gae, normalize_advantages};
use super::loss::{ppo_loss, LossReport};
use super::rollout::TrajectoryBatch;
use super::PpoConfig;

/// Per-worker GAE over a batch. Returns normalised advantages and the
/// (unnormalised) value targets, both worker-major.
pub fn batch_advantages(batch: &TrajectoryBatch, cfg: &PpoConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = batch.steps;
    let mut adv = Vec::with_capacity(batch.len());
    let mut targets = Vec::with_capacity(batch.len());
    for w in 0..batch.n_workers {
        let r = w * t..(w + 1) * t;
        let (a, v) = compute_gae(
            &batch.rewards[r.clone()],
            &batch.values[r.clone()],
            &batch.dones[r],
            batch.bootstrap[w],
            cfg.gamma,
            cfg.gae_lambda,
        )?;
        adv.extend(a);
        targets.extend(v);
    }
    normalize_advantages(&mut adv)?;
    Ok((adv, targets))
}

/// `epochs_per_batch` passes of shuffled minibatches, one clipped Adam step
/// each. Recurrent agents train on whole chunks replayed from their stored
/// initial states; feed-forward agents on individual transitions.
pub fn ppo_update<R: Rng + ?Sized>(
    net: &mut AgentNet<f32>,
    adam: &mut AdamState<f32>,
    batch: &TrajectoryBatch,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<LossReport> {
    let (adv, targets) = batch_advantages(batch, cfg)?;
    let recurrent = batch.initial_states.is_some();
    let (unit_len, n_units) = if recurrent {
        (batch.chunk_len, batch.n_workers * batch.n_chunks())
    } else {
        (1, batch.len())
    };
    let per_mb = (cfg.minibatch_size / unit_len).clamp(1, n_units);
    let mut order: Vec<usize> = (0..n_units).collect();
    let mut reports = Vec::new();
    for _ in 0..cfg.epochs_per_batch {
        order.shuffle(rng);
        for units in order.chunks(per_mb) {
            let m = units.len();
            // Time-major rows: row t * m + j is step t of unit j.
            let mut rows = Vec::with_capacity(m * unit_len);
            for t in 0..unit_len {
                for &u in units {
                    rows.push(if recurrent {
                        let (w, c) = (u / batch.n_chunks(), u % batch.n_chunks());
                        w * batch.steps + c * batch.chunk_len + t
                    } else {
                        u
                    });
                }
            }
            let obs = batch.obs.gather(&rows);
            let init = batch
                .initial_states
                .as_ref()
                .map(|s| LstmState::stack(&units.iter().map(|&u| s[u].clone()).collect::<Vec<_>>()));
            let resets: Vec<bool> = rows.iter().map(|&r| batch.resets[r]).collect();
            let fwd = net.forward_seq(&obs, unit_len, m, init.as_ref(), Some(&resets))?;
            let pick = |v: &[f64]| rows.iter().map(|&r| v[r]).collect::<Vec<_>>();
            let actions: Vec<usize> = rows.iter().map(|&r| batch.actions[r]).collect();
            let (report, dlogits, dvalues) = ppo_loss(
                &fwd.logits,
                &fwd.values,
                &actions,
                &pick(&batch.log_probs),
                &pick(&adv),
                &pick(&targets),
                cfg,
            )?;
            net.params_mut().zero_grad();
            net.backward(&fwd.cache, &dlogits, &dvalues)?;
            net.params_mut().clip_grad_norm(cfg.max_grad_norm)?;
            adam.step(net.params_mut())?;
            reports.push(report);
        }
    }
    Ok(LossReport::mean(&reports))
}
