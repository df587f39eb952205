use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Random,
    Monster,
    Trap,
    Ultimate,
}

impl MapKind {
    pub fn name(self) -> &'static str {
        match self {
            MapKind::Random => "random",
            MapKind::Monster => "monster",
            MapKind::Trap => "trap",
            MapKind::Ultimate => "ultimate",
        }
    }
}

impl std::str::FromStr for MapKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(MapKind::Random),
            "monster" => Ok(MapKind::Monster),
            "trap" => Ok(MapKind::Trap),
            "ultimate" => Ok(MapKind::Ultimate),
            other => Err(Error::Config(format!(
                "unknown map `{other}` (random, monster, trap, ultimate)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionSet {
    Cardinal4,
    Cardinal8,
}

impl ActionSet {
    pub fn len(self) -> usize {
        match self {
            ActionSet::Cardinal4 => 4,
            ActionSet::Cardinal8 => 8,
        }
    }

    pub fn is_empty(self) -> bool {
        false
    }

    /// `(d_row, d_col)` of `action`: N, E, S, W, then NE, SE, SW, NW.
    pub fn delta(self, action: usize) -> Option<(isize, isize)> {
        const DIRS: [(isize, isize); 8] = [
            (-1, 0),
            (0, 1),
            (1, 0),
            (0, -1),
            (-1, 1),
            (1, 1),
            (1, -1),
            (-1, -1),
        ];
        (action < self.len()).then(|| DIRS[action])
    }
}

/// Room layout, entity counts, rewards and observation settings.
///
/// When deserialized, omitted fields take the defaults of the given `kind`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RoomSpec")]
pub struct RoomConfig {
    pub kind: MapKind,
    /// Side of the square interior.
    pub interior: usize,
    pub n_monsters: usize,
    pub n_traps: usize,
    pub lit: bool,
    pub max_steps: u32,
    pub step_penalty: f64,
    pub goal_reward: f64,
    pub action_set: ActionSet,
    pub crop_size: usize,
    pub canvas_rows: usize,
    pub canvas_cols: usize,
    /// Canvas `(row, col)` of the interior's top-left cell.
    pub anchor: (usize, usize),
    /// Probability that one monster attack kills the agent.
    pub monster_kill_prob: f64,
    /// Include the whole canvas in observations.
    pub full_map: bool,
}

impl Default for RoomConfig {
    fn default() -> Self {
        Self::new(MapKind::Random)
    }
}

impl RoomConfig {
    /// Map defaults for `kind`, with the 4-action set and a 3×3 crop.
    pub fn new(kind: MapKind) -> Self {
        let (monsters, traps) = match kind {
            MapKind::Random => (0, 0),
            MapKind::Monster => (3, 0),
            MapKind::Trap => (0, 15),
            MapKind::Ultimate => (3, 15),
        };
        Self {
            kind,
            interior: 15,
            n_monsters: monsters,
            n_traps: traps,
            lit: kind != MapKind::Ultimate,
            max_steps: 300,
            step_penalty: 0.001,
            goal_reward: 1.0,
            action_set: ActionSet::Cardinal4,
            crop_size: 3,
            canvas_rows: 21,
            canvas_cols: 79,
            anchor: (3, 32),
            monster_kill_prob: 1.0 / 3.0,
            full_map: false,
        }
    }

    pub fn with_kind(self, kind: MapKind) -> Self {
        Self {
            crop_size: self.crop_size,
            action_set: self.action_set,
            full_map: self.full_map,
            ..Self::new(kind)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if ![3, 5, 9].contains(&self.crop_size) {
            return bad(format!("room.crop_size {} not in {{3,5,9}}", self.crop_size));
        }
        if self.interior < 2 {
            return bad("room.interior must be at least 2".into());
        }
        let (r, c) = self.anchor;
        if r < 1
            || c < 1
            || r + self.interior + 1 > self.canvas_rows
            || c + self.interior + 1 > self.canvas_cols
        {
            return bad("room.anchor: canvas must contain interior plus wall ring".into());
        }
        let cells = self.interior * self.interior;
        if 2 + self.n_monsters + self.n_traps > cells {
            return bad(format!(
                "room: {} entities do not fit in {cells} interior cells",
                2 + self.n_monsters + self.n_traps
            ));
        }
        if self.max_steps == 0 {
            return bad("room.max_steps must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.monster_kill_prob) {
            return bad("room.monster_kill_prob must be in [0,1]".into());
        }
        Ok(())
    }

    pub fn n_actions(&self) -> usize {
        self.action_set.len()
    }
}

/// Serialized form of [`RoomConfig`]: every field but `kind` is optional.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RoomSpec {
    #[serde(default = "default_kind")]
    kind: MapKind,
    interior: Option<usize>,
    n_monsters: Option<usize>,
    n_traps: Option<usize>,
    lit: Option<bool>,
    max_steps: Option<u32>,
    step_penalty: Option<f64>,
    goal_reward: Option<f64>,
    action_set: Option<ActionSet>,
    crop_size: Option<usize>,
    canvas_rows: Option<usize>,
    canvas_cols: Option<usize>,
    anchor: Option<(usize, usize)>,
    monster_kill_prob: Option<f64>,
    full_map: Option<bool>,
}

fn default_kind() -> MapKind {
    MapKind::Random
}

impl From<RoomSpec> for RoomConfig {
    fn from(s: RoomSpec) -> Self {
        let d = RoomConfig::new(s.kind);
        Self {
            kind: s.kind,
            interior: s.interior.unwrap_or(d.interior),
            n_monsters: s.n_monsters.unwrap_or(d.n_monsters),
            n_traps: s.n_traps.unwrap_or(d.n_traps),
            lit: s.lit.unwrap_or(d.lit),
            max_steps: s.max_steps.unwrap_or(d.max_steps),
            step_penalty: s.step_penalty.unwrap_or(d.step_penalty),
            goal_reward: s.goal_reward.unwrap_or(d.goal_reward),
            action_set: s.action_set.unwrap_or(d.action_set),
            crop_size: s.crop_size.unwrap_or(d.crop_size),
            canvas_rows: s.canvas_rows.unwrap_or(d.canvas_rows),
            canvas_cols: s.canvas_cols.unwrap_or(d.canvas_cols),
            anchor: s.anchor.unwrap_or(d.anchor),
            monster_kill_prob: s.monster_kill_prob.unwrap_or(d.monster_kill_prob),
            full_map: s.full_map.unwrap_or(d.full_map),
        }
    }
}
