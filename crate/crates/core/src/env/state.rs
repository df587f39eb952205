use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Glyph, RoomConfig};
use crate::error::{Error, Result};

/// Canvas coordinate `(row, col)`.
pub type Pos = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Monster {
    pub pos: Pos,
    pub alive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trap {
    pub pos: Pos,
    pub revealed: bool,
}

/// Complete simulator state. Cloning and comparing it is exact, RNG
/// included.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub config: RoomConfig,
    /// Static terrain per canvas cell: floor, wall, stairs, or pad for rock.
    pub grid: Vec<Glyph>,
    pub agent_pos: Pos,
    pub start: Pos,
    pub goal: Pos,
    pub monsters: Vec<Monster>,
    pub traps: Vec<Trap>,
    pub explored: Vec<bool>,
    pub steps: u32,
    pub done: bool,
    pub rng: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepInfo {
    pub reached_goal: bool,
    pub died: bool,
    pub timed_out: bool,
    pub teleported: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: super::Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

fn chebyshev(a: Pos, b: Pos) -> usize {
    a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))
}

fn manhattan(a: Pos, b: Pos) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

impl EnvState {
    /// Builds the room and places stairs, monsters and traps on distinct
    /// interior cells drawn from the seeded generator.
    pub fn reset(config: &RoomConfig, seed: u64) -> Result<(EnvState, super::Observation)> {
        config.validate()?;
        let (rows, cols) = (config.canvas_rows, config.canvas_cols);
        let (ar, ac) = config.anchor;
        let n = config.interior;
        let mut grid = vec![Glyph::Pad; rows * cols];
        for r in ar - 1..=ar + n {
            for c in ac - 1..=ac + n {
                let inside = (ar..ar + n).contains(&r) && (ac..ac + n).contains(&c);
                grid[r * cols + c] = if inside { Glyph::Floor } else { Glyph::Wall };
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let needed = 2 + config.n_monsters + config.n_traps;
        let picks = sample(&mut rng, n * n, needed).into_vec();
        let cell = |i: usize| (ar + i / n, ac + i % n);
        let start = cell(picks[0]);
        let goal = cell(picks[1]);
        grid[start.0 * cols + start.1] = Glyph::StairUp;
        grid[goal.0 * cols + goal.1] = Glyph::StairDown;
        let monsters = picks[2..2 + config.n_monsters]
            .iter()
            .map(|&i| Monster {
                pos: cell(i),
                alive: true,
            })
            .collect();
        let traps = picks[2 + config.n_monsters..]
            .iter()
            .map(|&i| Trap {
                pos: cell(i),
                revealed: false,
            })
            .collect();
        let mut explored = vec![false; rows * cols];
        if config.lit {
            for r in ar - 1..=ar + n {
                for c in ac - 1..=ac + n {
                    explored[r * cols + c] = true;
                }
            }
        }
        let mut state = EnvState {
            config: *config,
            grid,
            agent_pos: start,
            start,
            goal,
            monsters,
            traps,
            explored,
            steps: 0,
            done: false,
            rng,
        };
        state.light_around_agent();
        let obs = state.observe();
        Ok((state, obs))
    }

    fn idx(&self, p: Pos) -> usize {
        p.0 * self.config.canvas_cols + p.1
    }

    pub fn terrain(&self, p: Pos) -> Glyph {
        self.grid[self.idx(p)]
    }

    pub fn in_interior(&self, p: Pos) -> bool {
        let (ar, ac) = self.config.anchor;
        let n = self.config.interior;
        (ar..ar + n).contains(&p.0) && (ac..ac + n).contains(&p.1)
    }

    fn light_around_agent(&mut self) {
        let (r, c) = self.agent_pos;
        for rr in r - 1..=r + 1 {
            for cc in c - 1..=c + 1 {
                let i = self.idx((rr, cc));
                self.explored[i] = true;
            }
        }
    }

    fn live_monster_at(&self, p: Pos) -> Option<usize> {
        self.monsters.iter().position(|m| m.alive && m.pos == p)
    }

    fn trap_at(&self, p: Pos) -> Option<usize> {
        self.traps.iter().position(|t| t.pos == p)
    }

    /// Interior cells a teleport may land on: plain floor with no trap,
    /// stair or living monster.
    pub fn teleport_targets(&self) -> Vec<Pos> {
        let (ar, ac) = self.config.anchor;
        let n = self.config.interior;
        let mut out = Vec::with_capacity(n * n);
        for r in ar..ar + n {
            for c in ac..ac + n {
                let p = (r, c);
                if self.terrain(p) == Glyph::Floor
                    && self.trap_at(p).is_none()
                    && self.live_monster_at(p).is_none()
                {
                    out.push(p);
                }
            }
        }
        out
    }

    /// Advances the episode by one action.
    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::Env("step called after episode end".into()));
        }
        let (dr, dc) = self.config.action_set.delta(action).ok_or(Error::OutOfRange {
            what: "action",
            value: action,
            limit: self.config.n_actions(),
        })?;
        self.steps += 1;
        let mut reward = -self.config.step_penalty;
        let mut info = StepInfo::default();

        let target = (
            self.agent_pos.0.wrapping_add_signed(dr),
            self.agent_pos.1.wrapping_add_signed(dc),
        );
        if self.terrain(target) != Glyph::Wall {
            if let Some(m) = self.live_monster_at(target) {
                self.monsters[m].alive = false;
            } else {
                self.agent_pos = target;
                if let Some(t) = self.trap_at(target) {
                    self.traps[t].revealed = true;
                    let options = self.teleport_targets();
                    if !options.is_empty() {
                        let pick = self.rng.random_range(0..options.len());
                        self.agent_pos = options[pick];
                        info.teleported = true;
                    }
                }
            }
        }
        self.light_around_agent();

        if self.agent_pos == self.goal {
            reward += self.config.goal_reward;
            info.reached_goal = true;
        } else {
            info.died = self.monster_phase();
        }
        if self.steps >= self.config.max_steps {
            info.timed_out = !info.reached_goal && !info.died;
        }
        self.done = info.reached_goal || info.died || self.steps >= self.config.max_steps;
        Ok(StepResult {
            obs: self.observe(),
            reward,
            done: self.done,
            info,
        })
    }

    /// Living monsters act in order: adjacent ones attack, the rest step
    /// greedily toward the agent. Returns whether the agent died.
    pub fn monster_phase(&mut self) -> bool {
        for i in 0..self.monsters.len() {
            let m = self.monsters[i];
            if !m.alive {
                continue;
            }
            if chebyshev(m.pos, self.agent_pos) == 1 {
                if self.rng.random_bool(self.config.monster_kill_prob) {
                    return true;
                }
                continue;
            }
            if let Some(next) = self.monster_move(m.pos) {
                self.monsters[i].pos = next;
            }
        }
        false
    }

    fn monster_move(&mut self, from: Pos) -> Option<Pos> {
        let key = |p: Pos, a: Pos| (chebyshev(p, a), manhattan(p, a));
        let here = key(from, self.agent_pos);
        let mut best: Vec<Pos> = Vec::new();
        let mut best_key = here;
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let p = (from.0.wrapping_add_signed(dr), from.1.wrapping_add_signed(dc));
                let free = self.terrain(p) != Glyph::Wall
                    && self.in_interior(p)
                    && self.trap_at(p).is_none()
                    && self.live_monster_at(p).is_none()
                    && p != self.agent_pos;
                if !free {
                    continue;
                }
                let k = key(p, self.agent_pos);
                if k < best_key {
                    best_key = k;
                    best.clear();
                    best.push(p);
                } else if k == best_key && k < here {
                    best.push(p);
                }
            }
        }
        match best.len() {
            0 => None,
            1 => Some(best[0]),
            n => Some(best[self.rng.random_range(0..n)]),
        }
    }

    /// Agent position relative to the interior's top-left cell, as `(x, y)`.
    pub fn room_position(&self) -> (u8, u8) {
        let (ar, ac) = self.config.anchor;
        (
            (self.agent_pos.1 - ac) as u8,
            (self.agent_pos.0 - ar) as u8,
        )
    }
}
