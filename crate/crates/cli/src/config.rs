//! Experiment configuration: one TOML file with `[room]`, `[agent]`,
//! `[ppo]`, `[collect]`, `[seeds]` and `[[probes]]` sections.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use worldprobe::agent::AgentConfig;
use worldprobe::env::{MapKind, RoomConfig};
use worldprobe::par::Exec;
use worldprobe::ppo::PpoConfig;
use worldprobe::probe::{ProbeArch, ProbeConfig, GRID};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointChoice {
    #[default]
    Final,
    Best,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectConfig {
    pub n_samples: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Boundary rows excluded before splitting. Implied by the crop size
    /// when unset.
    pub margin: Option<u8>,
    pub checkpoint: CheckpointChoice,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            n_samples: 230_000,
            n_train: 200_000,
            n_test: 30_000,
            margin: None,
            checkpoint: CheckpointChoice::Final,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub train: u64,
    pub collect: u64,
    pub probe: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { train: 0, collect: 1, probe: 2 }
    }
}

/// One probe to train: which tap, and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub tap: String,
    pub arch: ProbeArch,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_hidden() -> usize {
    256
}

fn default_epochs() -> usize {
    50
}

fn default_batch() -> usize {
    1024
}

impl ProbeSpec {
    pub fn new(tap: &str, arch: ProbeArch) -> Self {
        Self {
            tap: tap.into(),
            arch,
            hidden_dim: default_hidden(),
            lr: None,
            epochs: default_epochs(),
            batch_size: default_batch(),
        }
    }

    pub fn probe_config(&self, seed: u64) -> ProbeConfig {
        ProbeConfig {
            arch: self.arch,
            hidden_dim: self.hidden_dim,
            lr: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
        }
    }

    /// File stem for this probe's artifacts.
    pub fn stem(&self) -> String {
        format!("{}_{}", self.tap, self.arch.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub output_dir: PathBuf,
    pub room: RoomConfig,
    pub agent: AgentConfig,
    pub ppo: PpoConfig,
    pub collect: CollectConfig,
    pub seeds: Seeds,
    pub probes: Vec<ProbeSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            output_dir: PathBuf::from("runs/default"),
            room: RoomConfig::new(MapKind::Random),
            agent: AgentConfig::experiment3(),
            ppo: PpoConfig::default(),
            collect: CollectConfig::default(),
            seeds: Seeds::default(),
            probes: ["lstm_hidden", "lstm_cell"]
                .iter()
                .flat_map(|t| [ProbeSpec::new(t, ProbeArch::Linear), ProbeSpec::new(t, ProbeArch::Mlp3)])
                .collect(),
        }
    }
}

/// Boundary margin the protocol pairs with each crop size.
pub fn implied_margin(crop: usize) -> u8 {
    match crop {
        3 => 1,
        5 => 2,
        _ => 0,
    }
}

/// Command-line overrides, applied after the file is read.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub map: Option<MapKind>,
    pub crop: Option<usize>,
    pub deterministic: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// `--seed N` sets the train, collect and probe seeds to N, N+1, N+2.
    /// `--deterministic` runs everything sequentially with one rollout
    /// worker.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seeds = Seeds { train: s, collect: s.wrapping_add(1), probe: s.wrapping_add(2) };
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(kind) = o.map {
            self.room = self.room.with_kind(kind);
        }
        if let Some(c) = o.crop {
            self.room.crop_size = c;
            self.agent.crop_size = c;
            self.collect.margin = None;
        }
        if o.deterministic {
            self.ppo.exec = Exec::Sequential;
            self.ppo.n_workers = 1;
        }
    }

    pub fn margin(&self) -> u8 {
        self.collect.margin.unwrap_or_else(|| implied_margin(self.room.crop_size))
    }

    pub fn exec(&self) -> Exec {
        self.ppo.exec
    }

    /// Taps named by the probes, first appearance first.
    pub fn taps(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for p in &self.probes {
            if !out.contains(&p.tap) {
                out.push(p.tap.clone());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let err = |m: String| Err(CliError::Config(m));
        let section = |s: &str, e: worldprobe::Error| CliError::Config(format!("{s}: {e}"));
        self.room.validate().map_err(|e| section("room", e))?;
        self.agent.validate().map_err(|e| section("agent", e))?;
        self.ppo.validate(self.agent.lstm).map_err(|e| section("ppo", e))?;
        if self.agent.crop_size != self.room.crop_size {
            return err(format!(
                "agent.crop_size ({}) disagrees with room.crop_size ({})",
                self.agent.crop_size, self.room.crop_size
            ));
        }
        if self.agent.n_actions != self.room.n_actions() {
            return err(format!(
                "agent.n_actions ({}) disagrees with room.action_set ({} actions)",
                self.agent.n_actions,
                self.room.n_actions()
            ));
        }
        if self.agent.use_full_map && !self.room.full_map {
            return err("agent.use_full_map requires room.full_map".into());
        }
        if self.agent.use_full_map && self.agent.map_dims != (self.room.canvas_rows, self.room.canvas_cols) {
            return err("agent.map_dims must equal the room canvas size".into());
        }
        if self.room.interior != GRID {
            return err(format!("room.interior must be {GRID} for position probes"));
        }
        let implied = implied_margin(self.room.crop_size);
        if let Some(m) = self.collect.margin {
            if m != implied {
                return err(format!(
                    "collect.margin ({m}) disagrees with the margin implied by crop {} ({implied})",
                    self.room.crop_size
                ));
            }
        }
        if self.collect.n_samples == 0 || self.collect.n_train == 0 || self.collect.n_test == 0 {
            return err("collect.n_samples, n_train and n_test must be positive".into());
        }
        for (i, p) in self.probes.iter().enumerate() {
            self.agent
                .tap_dim(&p.tap)
                .map_err(|e| CliError::Config(format!("probes[{i}].tap: {e}")))?;
            p.probe_config(0)
                .validate()
                .map_err(|e| CliError::Config(format!("probes[{i}]: {e}")))?;
        }
        Ok(())
    }
}
