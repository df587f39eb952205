//! Subcommand implementations. This module does all filesystem writes.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use worldprobe::agent::{select_action, ActionMode};
use worldprobe::env::EnvState;
use worldprobe::io::{self as wio, Checkpoint, DatasetWriter, ProbeHeader, TrainingMeta};
use worldprobe::probe::{
    collect_with, evaluate_probe, filter_boundary, split_dataset, train_probe, ActivationDataset, DatasetMeta,
    ProbeReport, REPORT_HEADER,
};
use worldprobe::ppo::{self, TrainStatus, METRICS_HEADER};

use crate::config::{CheckpointChoice, ExperimentConfig};
use crate::error::CliError;

/// Where each artifact lives under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn checkpoint(&self, which: CheckpointChoice) -> PathBuf {
        match which {
            CheckpointChoice::Final => self.root.join("checkpoint.bin"),
            CheckpointChoice::Best => self.root.join("checkpoint_best.bin"),
        }
    }

    pub fn train_summary(&self) -> PathBuf {
        self.root.join("train.json")
    }

    pub fn dataset(&self, tap: &str) -> PathBuf {
        self.root.join("datasets").join(format!("{tap}.apds"))
    }

    pub fn dataset_meta(&self, tap: &str) -> PathBuf {
        self.root.join("datasets").join(format!("{tap}.json"))
    }

    pub fn probe(&self, stem: &str) -> PathBuf {
        self.root.join("probes").join(format!("{stem}.appr"))
    }

    pub fn probe_meta(&self, stem: &str) -> PathBuf {
        self.root.join("probes").join(format!("{stem}.json"))
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.csv")
    }

    pub fn eval_report(&self) -> PathBuf {
        self.root.join("report_eval.csv")
    }
}

fn runtime(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| runtime(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| runtime(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Runtime(format!("missing input artifact {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| runtime(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| runtime(path, e))?;
    write_text(path, &(text + "\n"))
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Summary written next to the checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub converged: bool,
    pub env_steps: u64,
    pub iterations: usize,
    pub final_return: Option<f64>,
    pub best_return: Option<f64>,
    pub config: ExperimentConfig,
}

pub fn train(cfg: &ExperimentConfig, dry_run: bool) -> Result<Option<TrainSummary>, CliError> {
    cfg.validate()?;
    let out = Layout::new(&cfg.output_dir);
    if dry_run {
        println!(
            "config ok: {} on {} map, crop {}, {} env steps budget; would write to {}",
            cfg.name,
            cfg.room.kind.name(),
            cfg.room.crop_size,
            cfg.ppo.max_env_steps,
            cfg.output_dir.display()
        );
        return Ok(None);
    }
    write_text(&out.config(), &cfg.to_toml())?;
    let metrics_path = out.metrics();
    let mut metrics = create(&metrics_path)?;
    writeln!(metrics, "{METRICS_HEADER}").map_err(|e| runtime(&metrics_path, e))?;
    let mut write_err = None;
    let outcome = ppo::train(&cfg.room, &cfg.agent, &cfg.ppo, cfg.seeds.train, |row| {
        eprintln!(
            "iter {:>5}  steps {:>9}  return {:>8.4}  len {:>6.1}  entropy {:.3}",
            row.iter, row.env_steps, row.mean_return, row.mean_ep_len, row.entropy
        );
        if let Err(e) = writeln!(metrics, "{}", row.csv_line()).and_then(|_| metrics.flush()) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(runtime(&metrics_path, e));
    }
    let converged = outcome.status == TrainStatus::Converged;
    let meta = |ret: f64| TrainingMeta {
        env_steps: outcome.env_steps,
        mean_return: finite(ret),
        seed: cfg.seeds.train,
        converged,
        iterations: outcome.metrics.len(),
    };
    for (which, net, ret) in [
        (CheckpointChoice::Final, &outcome.final_net, outcome.final_return),
        (CheckpointChoice::Best, &outcome.best_net, outcome.best_return),
    ] {
        let path = out.checkpoint(which);
        wio::write_checkpoint(create(&path)?, &Checkpoint::from_net(net, meta(ret)))
            .map_err(|e| runtime(&path, e))?;
    }
    let summary = TrainSummary {
        converged,
        env_steps: outcome.env_steps,
        iterations: outcome.metrics.len(),
        final_return: finite(outcome.final_return),
        best_return: finite(outcome.best_return),
        config: cfg.clone(),
    };
    write_json(&out.train_summary(), &summary)?;
    println!(
        "{} after {} env steps; final mean return {:.4}",
        if converged { "converged" } else { "budget exhausted" },
        outcome.env_steps,
        outcome.final_return
    );
    Ok(Some(summary))
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, String), CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Runtime(format!("missing input artifact {}: {e}", path.display())))?;
    let ck = wio::read_checkpoint(&bytes[..]).map_err(|e| runtime(path, e))?;
    let digest = Sha256::digest(&bytes);
    let id: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    Ok((ck, id))
}

/// Dataset sidecar: provenance of a `.apds` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub tap: String,
    pub dim: usize,
    pub count: usize,
    pub meta: DatasetMeta,
    pub config: ExperimentConfig,
}

pub fn collect(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let out = Layout::new(&cfg.output_dir);
    let ck_path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| out.checkpoint(cfg.collect.checkpoint));
    let (ck, ck_id) = load_checkpoint(&ck_path)?;
    if ck.agent != cfg.agent {
        return Err(CliError::Config(format!(
            "agent section disagrees with the agent stored in {}",
            ck_path.display()
        )));
    }
    let net = ck.to_net()?;
    let taps = cfg.taps();
    let n = cfg.collect.n_samples;
    let mut writers = Vec::with_capacity(taps.len());
    for tap in &taps {
        let path = out.dataset(tap);
        let dim = cfg.agent.tap_dim(tap)?;
        writers.push((DatasetWriter::new(create(&path)?, tap, dim, n, 0).map_err(|e| runtime(&path, e))?, path));
    }
    let mut done = 0usize;
    collect_with(&net, &cfg.room, &taps, n, cfg.seeds.collect, cfg.exec(), |rows, (x, y)| {
        for ((w, _), row) in writers.iter_mut().zip(rows) {
            w.push(row, x, y)?;
        }
        done += 1;
        if done % 50_000 == 0 {
            eprintln!("collected {done}/{n}");
        }
        Ok(())
    })?;
    let meta = DatasetMeta {
        map: cfg.room.kind,
        crop_size: cfg.room.crop_size,
        checkpoint_id: ck_id,
        seed: cfg.seeds.collect,
    };
    let mut paths = Vec::new();
    for ((w, path), tap) in writers.into_iter().zip(&taps) {
        w.finish().map_err(|e| runtime(&path, e))?;
        let sidecar = DatasetSidecar {
            tap: tap.clone(),
            dim: cfg.agent.tap_dim(tap)?,
            count: n,
            meta: meta.clone(),
            config: cfg.clone(),
        };
        write_json(&out.dataset_meta(tap), &sidecar)?;
        println!("wrote {} ({n} records)", path.display());
        paths.push(path);
    }
    Ok(paths)
}

/// Loads a tap's dataset, checks its width against the agent config,
/// filters the boundary and splits it.
fn load_split(cfg: &ExperimentConfig, tap: &str) -> Result<(ActivationDataset, ActivationDataset), CliError> {
    let path = Layout::new(&cfg.output_dir).dataset(tap);
    let ds = wio::read_dataset(open(&path)?).map_err(|e| runtime(&path, e))?;
    let want = cfg.agent.tap_dim(tap)?;
    if ds.dim != want || ds.tap != tap {
        return Err(CliError::Runtime(format!(
            "dimension mismatch: {} holds {}-dim `{}` activations but the agent's `{tap}` tap has {want}",
            path.display(),
            ds.dim,
            ds.tap
        )));
    }
    let filtered = filter_boundary(&ds, cfg.margin())?;
    drop(ds);
    Ok(split_dataset(&filtered, cfg.collect.n_train, cfg.collect.n_test, cfg.seeds.probe)?)
}

fn report_csv(reports: &[ProbeReport]) -> String {
    let mut s = format!("{REPORT_HEADER}\n");
    for r in reports {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSidecar {
    pub report: ProbeReport,
    pub epoch_losses: Vec<f64>,
    pub n_train: usize,
    pub config: ExperimentConfig,
}

/// Runs `f` once per probe spec, loading each tap's split once; results
/// come back in spec order.
fn per_probe<T>(
    cfg: &ExperimentConfig,
    mut f: impl FnMut(usize, &ActivationDataset, &ActivationDataset) -> Result<T, CliError>,
) -> Result<Vec<T>, CliError> {
    let mut slots: Vec<Option<T>> = (0..cfg.probes.len()).map(|_| None).collect();
    for tap in cfg.taps() {
        let (train, test) = load_split(cfg, &tap)?;
        for (i, spec) in cfg.probes.iter().enumerate() {
            if spec.tap == tap {
                slots[i] = Some(f(i, &train, &test)?);
            }
        }
    }
    Ok(slots.into_iter().map(|s| s.expect("every probe has a tap")).collect())
}

pub fn probe(cfg: &ExperimentConfig) -> Result<Vec<ProbeReport>, CliError> {
    cfg.validate()?;
    let out = Layout::new(&cfg.output_dir);
    let reports = per_probe(cfg, |i, train, test| {
        let spec = &cfg.probes[i];
        eprintln!("training {} probe on {} ({} train records)", spec.arch.name(), spec.tap, train.len());
        let trained = train_probe(train, &spec.probe_config(cfg.seeds.probe))?;
        let report = evaluate_probe(&trained.probe, test)?;
        let path = out.probe(&spec.stem());
        wio::write_probe(create(&path)?, &trained.probe, &spec.tap, test.margin).map_err(|e| runtime(&path, e))?;
        write_json(
            &out.probe_meta(&spec.stem()),
            &ProbeSidecar { report: report.clone(), epoch_losses: trained.epoch_losses, n_train: train.len(), config: cfg.clone() },
        )?;
        println!("{}", report.csv_line());
        Ok(report)
    })?;
    write_text(&out.report(), &report_csv(&reports))?;
    Ok(reports)
}

/// Re-evaluates saved probes on the regenerated test split and checks the
/// result against `report.csv` when one exists.
pub fn eval(cfg: &ExperimentConfig) -> Result<Vec<ProbeReport>, CliError> {
    cfg.validate()?;
    let out = Layout::new(&cfg.output_dir);
    let reports = per_probe(cfg, |i, _, test| {
        let spec = &cfg.probes[i];
        let path = out.probe(&spec.stem());
        let (header, probe): (ProbeHeader, _) = wio::read_probe(open(&path)?).map_err(|e| runtime(&path, e))?;
        if header.tap != spec.tap || header.margin != test.margin || header.config != spec.probe_config(cfg.seeds.probe) {
            return Err(CliError::Runtime(format!("{} was trained under a different config", path.display())));
        }
        Ok(evaluate_probe(&probe, test)?)
    })?;
    let text = report_csv(&reports);
    write_text(&out.eval_report(), &text)?;
    print!("{text}");
    match fs::read_to_string(out.report()) {
        Ok(saved) if saved == text => eprintln!("eval reproduces {}", out.report().display()),
        Ok(_) => {
            return Err(CliError::Runtime(format!(
                "eval disagrees with {}; see {}",
                out.report().display(),
                out.eval_report().display()
            )))
        }
        Err(_) => {}
    }
    Ok(reports)
}

pub fn experiment(cfg: &ExperimentConfig) -> Result<Vec<ProbeReport>, CliError> {
    train(cfg, false)?;
    collect(cfg, None)?;
    probe(cfg)?;
    eval(cfg)
}

/// Text frames of one seeded episode: the agent's policy when a
/// checkpoint is given, uniform random actions otherwise.
pub fn render(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    max_frames: Option<usize>,
    greedy: bool,
) -> Result<String, CliError> {
    cfg.room.validate()?;
    let seed = cfg.seeds.collect;
    let net = match checkpoint {
        Some(p) => {
            let (ck, _) = load_checkpoint(p)?;
            let net = ck.to_net()?;
            let c = net.config();
            if c.crop_size != cfg.room.crop_size || c.n_actions != cfg.room.n_actions() || (c.use_full_map && !cfg.room.full_map) {
                return Err(CliError::Config(format!("{} does not fit the room config", p.display())));
            }
            Some(net)
        }
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut env, mut obs) = EnvState::reset(&cfg.room, seed)?;
    let mut state = net.as_ref().and_then(|n| n.initial_state(1));
    let mut frames = format!("seed {seed} map {} step 0\n{}", cfg.room.kind.name(), env.render_text());
    let mut ret = 0.0;
    let limit = max_frames.unwrap_or(usize::MAX);
    let mode = if greedy { ActionMode::Greedy } else { ActionMode::Sample };
    for t in 1..=limit {
        let action = match &net {
            Some(n) => {
                let out = n.step(&obs, state.as_ref())?;
                state = out.state;
                select_action(&out.logits, &mut rng, mode)?.0
            }
            None => rng.random_range(0..cfg.room.n_actions()),
        };
        let res = env.step(action)?;
        ret += res.reward;
        obs = res.obs;
        frames.push_str(&format!(
            "step {t} action {action} reward {:+.3} return {ret:+.3}\n{}",
            res.reward,
            env.render_text()
        ));
        if res.done {
            let why = if res.info.reached_goal {
                "goal"
            } else if res.info.died {
                "died"
            } else {
                "timeout"
            };
            frames.push_str(&format!("episode over ({why}) after {t} steps, return {ret:+.3}\n"));
            break;
        }
    }
    Ok(frames)
}
