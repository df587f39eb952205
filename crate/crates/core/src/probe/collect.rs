use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{select_action, ActionMode, AgentNet, ObsBatch};
use crate::env::{EnvState, Observation, RoomConfig};
use crate::error::{Error, Result};
use crate::par::{self, Exec};

use super::dataset::{ActivationDataset, DatasetMeta};

/// Parallel environment instances used during collection. Fixed so that
/// the record stream does not depend on the machine.
pub const COLLECT_SHARDS: usize = 16;

struct Shard {
    env: EnvState,
    obs: Observation,
    rng: ChaCha8Rng,
    needs_reset: bool,
}

/// Runs the agent with sampled actions in `COLLECT_SHARDS` lockstep
/// environments (shard `i` seeded from `seed + i`) and hands `sink` exactly
/// `n` records: the requested taps computed from an observation and the
/// agent position that observation shows. Records arrive step-major, shard
/// order within a step.
pub fn collect_with(
    net: &AgentNet<f32>,
    room: &RoomConfig,
    taps: &[String],
    n: usize,
    seed: u64,
    exec: Exec,
    mut sink: impl FnMut(&[&[f32]], (u8, u8)) -> Result<()>,
) -> Result<()> {
    let cfg = net.config();
    if cfg.crop_size != room.crop_size || cfg.n_actions != room.n_actions() || (cfg.use_full_map && !room.full_map) {
        return Err(Error::Config("checkpoint does not match the room config".into()));
    }
    let dims = taps.iter().map(|t| cfg.tap_dim(t)).collect::<Result<Vec<_>>>()?;
    let s = COLLECT_SHARDS;
    let mut shards = (0..s)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let (env, obs) = EnvState::reset(room, rng.random())?;
            Ok(Shard { env, obs, rng, needs_reset: true })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut state = net.initial_state(s);
    let k = cfg.n_actions;
    let mut emitted = 0;
    while emitted < n {
        let resets: Vec<bool> = shards.iter().map(|sh| sh.needs_reset).collect();
        let batch = ObsBatch::from_observations(shards.iter().map(|sh| &sh.obs));
        let fwd = net.forward_seq(&batch, 1, s, state.as_ref(), Some(&resets))?;
        let acts = net.taps(&fwd.cache, taps)?;
        for (i, sh) in shards.iter().enumerate().take(n - emitted) {
            let rows: Vec<&[f32]> = acts
                .iter()
                .zip(&dims)
                .map(|((_, v), &d)| &v[i * d..(i + 1) * d])
                .collect();
            sink(&rows, sh.env.room_position())?;
        }
        emitted = (emitted + s).min(n);
        state = fwd.state;
        let room = *room;
        let stepped = par::map_mut(exec, &mut shards, |i, sh| -> Result<()> {
            let (a, _) = select_action(&fwd.logits[i * k..(i + 1) * k], &mut sh.rng, ActionMode::Sample)?;
            let res = sh.env.step(a)?;
            sh.obs = res.obs;
            sh.needs_reset = res.done;
            if res.done {
                let (env, obs) = EnvState::reset(&room, sh.rng.random())?;
                sh.env = env;
                sh.obs = obs;
            }
            Ok(())
        });
        for (i, r) in stepped.into_iter().enumerate() {
            r.map_err(|e| Error::Worker { worker: i, source: Box::new(e) })?;
        }
    }
    Ok(())
}

/// In-memory form of [`collect_with`]: one dataset per tap, `n` records each.
pub fn collect_activations(
    net: &AgentNet<f32>,
    room: &RoomConfig,
    taps: &[String],
    n: usize,
    seed: u64,
    exec: Exec,
    checkpoint_id: &str,
) -> Result<Vec<ActivationDataset>> {
    let cfg = net.config();
    let meta = DatasetMeta {
        map: room.kind,
        crop_size: room.crop_size,
        checkpoint_id: checkpoint_id.to_string(),
        seed,
    };
    let mut out = taps
        .iter()
        .map(|t| {
            let mut ds = ActivationDataset::new(t.clone(), cfg.tap_dim(t)?);
            ds.activations.reserve(n * ds.dim);
            ds.meta = Some(meta.clone());
            Ok(ds)
        })
        .collect::<Result<Vec<_>>>()?;
    collect_with(net, room, taps, n, seed, exec, |rows, (x, y)| {
        for (ds, row) in out.iter_mut().zip(rows) {
            ds.push(row, x, y)?;
        }
        Ok(())
    })?;
    Ok(out)
}
