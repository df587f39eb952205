use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{select_action, ActionMode, AgentNet, LstmState, ObsBatch};
use crate::env::{EnvState, Observation, RoomConfig};
use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// One finished episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStat {
    pub ret: f64,
    pub len: u32,
    pub reached_goal: bool,
}

#[derive(Debug, Clone)]
struct Worker {
    env: EnvState,
    obs: Observation,
    rng: ChaCha8Rng,
    needs_reset: bool,
    ep_return: f64,
}

/// Persistent rollout workers: environments, their RNG streams and the
/// recurrent state carried across rollouts.
#[derive(Debug, Clone)]
pub struct RolloutState {
    room: RoomConfig,
    workers: Vec<Worker>,
    lstm: Option<LstmState<f32>>,
}

impl RolloutState {
    /// Worker `i` draws episode seeds and actions from a stream seeded
    /// with `base_seed + i`.
    pub fn new(room: &RoomConfig, net: &AgentNet<f32>, n_workers: usize, base_seed: u64) -> Result<Self> {
        let workers = (0..n_workers)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(i as u64));
                let (env, obs) = EnvState::reset(room, rng.random())
                    .map_err(|e| Error::Worker { worker: i, source: Box::new(e) })?;
                Ok(Worker { env, obs, rng, needs_reset: true, ep_return: 0.0 })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { room: *room, workers, lstm: net.initial_state(n_workers) })
    }

    pub fn n_workers(&self) -> usize {
        self.workers.len()
    }
}

/// `steps` transitions from every worker, stored worker-major
/// (`w * steps + t`).
#[derive(Debug, Clone)]
pub struct TrajectoryBatch {
    pub n_workers: usize,
    pub steps: usize,
    pub obs: ObsBatch,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// The recurrent state was zeroed before this step.
    pub resets: Vec<bool>,
    pub chunk_len: usize,
    /// State entering each chunk (before that step's reset), indexed
    /// `w * (steps / chunk_len) + c`. `None` for feed-forward agents.
    pub initial_states: Option<Vec<LstmState<f32>>>,
    /// Value of the observation following each worker's last step.
    pub bootstrap: Vec<f64>,
    pub episodes: Vec<EpisodeStat>,
}

impl TrajectoryBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn n_chunks(&self) -> usize {
        self.steps / self.chunk_len
    }
}

struct StepRecord {
    obs: Observation,
    action: usize,
    log_prob: f64,
    reward: f64,
    done: bool,
    reset: bool,
    episode: Option<EpisodeStat>,
}

/// Runs `steps` steps in every worker with the frozen `net`, sampling
/// actions. Episodes reset automatically when done.
pub fn collect_rollout(
    state: &mut RolloutState,
    net: &AgentNet<f32>,
    steps: usize,
    chunk_len: usize,
    exec: Exec,
) -> Result<TrajectoryBatch> {
    let w = state.workers.len();
    let recurrent = state.lstm.is_some();
    if steps == 0 || chunk_len == 0 || (recurrent && steps % chunk_len != 0) {
        return Err(Error::Config(format!("rollout of {steps} steps with chunks of {chunk_len}")));
    }
    let n_chunks = steps / chunk_len;
    let mut per_worker: Vec<Vec<StepRecord>> = (0..w).map(|_| Vec::with_capacity(steps)).collect();
    let mut values = vec![0.0; w * steps];
    let mut initial = recurrent.then(|| vec![None; w * n_chunks]);

    for t in 0..steps {
        let resets: Vec<bool> = state.workers.iter().map(|wk| wk.needs_reset).collect();
        if let (Some(init), Some(h)) = (initial.as_mut(), state.lstm.as_ref()) {
            if t % chunk_len == 0 {
                for b in 0..w {
                    init[b * n_chunks + t / chunk_len] = Some(h.row(b));
                }
            }
        }
        let batch = ObsBatch::from_observations(state.workers.iter().map(|wk| &wk.obs));
        let fwd = net.forward_seq(&batch, 1, w, state.lstm.as_ref(), Some(&resets))?;
        state.lstm = fwd.state;
        for b in 0..w {
            values[b * steps + t] = fwd.values[b] as f64;
        }
        let k = net.config().n_actions;
        let room = state.room;
        let records = par::map_mut(exec, &mut state.workers, |i, wk| -> Result<StepRecord> {
            let (action, logp) = select_action(&fwd.logits[i * k..(i + 1) * k], &mut wk.rng, ActionMode::Sample)?;
            let res = wk.env.step(action)?;
            wk.ep_return += res.reward;
            let obs = std::mem::replace(&mut wk.obs, res.obs);
            let reset = wk.needs_reset;
            let mut episode = None;
            if res.done {
                episode = Some(EpisodeStat {
                    ret: wk.ep_return,
                    len: wk.env.steps,
                    reached_goal: res.info.reached_goal,
                });
                let (env, o) = EnvState::reset(&room, wk.rng.random())?;
                wk.env = env;
                wk.obs = o;
                wk.ep_return = 0.0;
            }
            wk.needs_reset = res.done;
            Ok(StepRecord { obs, action, log_prob: logp as f64, reward: res.reward, done: res.done, reset, episode })
        });
        for (i, r) in records.into_iter().enumerate() {
            per_worker[i].push(r.map_err(|e| Error::Worker { worker: i, source: Box::new(e) })?);
        }
    }

    let resets: Vec<bool> = state.workers.iter().map(|wk| wk.needs_reset).collect();
    let batch = ObsBatch::from_observations(state.workers.iter().map(|wk| &wk.obs));
    let boot = net.forward_seq(&batch, 1, w, state.lstm.as_ref(), Some(&resets))?;
    let bootstrap = boot.values.iter().map(|&v| v as f64).collect();

    let n = w * steps;
    let mut out = TrajectoryBatch {
        n_workers: w,
        steps,
        obs: ObsBatch::from_observations(per_worker.iter().flatten().map(|r| &r.obs)),
        actions: Vec::with_capacity(n),
        log_probs: Vec::with_capacity(n),
        values,
        rewards: Vec::with_capacity(n),
        dones: Vec::with_capacity(n),
        resets: Vec::with_capacity(n),
        chunk_len,
        initial_states: initial.map(|v| v.into_iter().map(|s| s.expect("chunk state recorded")).collect()),
        bootstrap,
        episodes: Vec::new(),
    };
    // Episodes are listed in completion order (step-major, then worker).
    for t in 0..steps {
        for recs in &per_worker {
            if let Some(ep) = recs[t].episode {
                out.episodes.push(ep);
            }
        }
    }
    for r in per_worker.into_iter().flatten() {
        out.actions.push(r.action);
        out.log_probs.push(r.log_prob);
        out.rewards.push(r.reward);
        out.dones.push(r.done);
        out.resets.push(r.reset);
    }
    Ok(out)
}
