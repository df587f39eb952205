use std::fs;
use std::path::Path;

use worldprobe::io::{read_checkpoint, write_dataset};
use worldprobe::probe::ActivationDataset;
use worldprobe_cli::{run, ExperimentConfig};

const TINY: &str = r#"
name = "tiny"

[room]
kind = "random"
crop_size = 3

[agent]
embed_dim = 4
conv_channels = [4, 4]
hidden_dim = 16
lstm = true
lstm_size = 8
crop_size = 3
n_actions = 4

[ppo]
n_workers = 2
rollout_length = 16
bptt_chunk = 8
minibatch_size = 16
epochs_per_batch = 1
max_env_steps = 96

[collect]
n_samples = 900
n_train = 200
n_test = 30

[[probes]]
tap = "lstm_hidden"
arch = "linear"
epochs = 2

[[probes]]
tap = "lstm_hidden"
arch = "mlp3"
hidden_dim = 8
epochs = 2

[[probes]]
tap = "lstm_cell"
arch = "linear"
epochs = 2

[[probes]]
tap = "lstm_cell"
arch = "mlp3"
hidden_dim = 8
epochs = 2
"#;

fn setup(config: &str) -> (tempfile::TempDir, String, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, config).unwrap();
    let out = dir.path().join("out");
    (dir, cfg.display().to_string(), out.display().to_string())
}

fn cli(args: &[&str]) -> i32 {
    run(std::iter::once("worldprobe").chain(args.iter().copied()))
}

#[test]
fn presets_parse_and_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (n, crop, margin) in [(1, 9, 0), (2, 5, 2), (3, 3, 1)] {
        let cfg = ExperimentConfig::load(&root.join(format!("experiment{n}.toml"))).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.room.crop_size, crop);
        assert_eq!(cfg.margin(), margin);
    }
    // Omitted room fields follow the map kind.
    let cfg = ExperimentConfig::load(&root.join("experiment1.toml")).unwrap();
    assert_eq!((cfg.room.n_monsters, cfg.room.n_traps, cfg.room.lit), (3, 15, false));
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = ExperimentConfig::from_toml(TINY).unwrap();
    assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    let d = ExperimentConfig::default();
    assert_eq!(ExperimentConfig::from_toml(&d.to_toml()).unwrap(), d);
}

#[test]
fn dry_run_touches_nothing() {
    let (_dir, cfg, out) = setup(TINY);
    assert_eq!(cli(&["train", "--dry-run", "--config", &cfg, "--out", &out]), 0);
    assert!(!Path::new(&out).exists());
}

#[test]
fn config_errors_exit_one_and_name_the_field() {
    let (_dir, cfg, out) = setup(&TINY.replace("crop_size = 3\nn_actions", "crop_size = 5\nn_actions"));
    assert_eq!(cli(&["train", "--dry-run", "--config", &cfg, "--out", &out]), 1);
    let err = ExperimentConfig::from_toml(&TINY.replace("crop_size = 3\nn_actions", "crop_size = 5\nn_actions"))
        .unwrap()
        .validate()
        .unwrap_err();
    assert!(err.to_string().contains("agent.crop_size"), "{err}");

    let typo = TINY.replace("max_env_steps", "max_env_step");
    let err = ExperimentConfig::from_toml(&typo).unwrap_err();
    assert!(err.to_string().contains("max_env_step"), "{err}");
    let (_d2, cfg2, _) = setup(&typo);
    assert_eq!(cli(&["train", "--dry-run", "--config", &cfg2]), 1);

    let bad_tap = TINY.replace("tap = \"lstm_cell\"", "tap = \"lstm_state\"");
    let err = ExperimentConfig::from_toml(&bad_tap).unwrap().validate().unwrap_err();
    assert!(err.to_string().contains("probes[2].tap"), "{err}");
    let margin = TINY.replace("n_test = 30", "n_test = 30\nmargin = 2");
    assert!(ExperimentConfig::from_toml(&margin).unwrap().validate().is_err());
    assert_eq!(cli(&["train", "--dry-run", "--crop", "7"]), 1);
    assert_eq!(cli(&["launch"]), 1);
}

#[test]
fn overrides_apply_on_top_of_the_file() {
    let (_dir, cfg, out) = setup(TINY);
    // Crop 5 would disagree with nothing: both room and agent follow it.
    assert_eq!(cli(&["train", "--dry-run", "--config", &cfg, "--crop", "5", "--map", "trap", "--seed", "9"]), 0);
    let mut c = ExperimentConfig::from_toml(TINY).unwrap();
    c.apply(&worldprobe_cli::Overrides {
        seed: Some(9),
        out: Some(out.into()),
        map: Some(worldprobe::env::MapKind::Trap),
        crop: Some(5),
        deterministic: true,
    });
    assert_eq!((c.seeds.train, c.seeds.collect, c.seeds.probe), (9, 10, 11));
    assert_eq!((c.room.crop_size, c.agent.crop_size, c.margin()), (5, 5, 2));
    assert_eq!((c.room.n_traps, c.ppo.n_workers), (15, 1));
    c.validate().unwrap();
}

#[test]
fn missing_artifacts_exit_two() {
    let (_dir, cfg, out) = setup(TINY);
    assert_eq!(cli(&["collect", "--config", &cfg, "--out", &out]), 2);
    assert_eq!(cli(&["probe", "--config", &cfg, "--out", &out]), 2);
    assert_eq!(cli(&["eval", "--config", &cfg, "--out", &out]), 2);
}

#[test]
fn full_pipeline_produces_consistent_artifacts() {
    let (_dir, cfg, out) = setup(TINY);
    assert_eq!(cli(&["experiment", "--config", &cfg, "--out", &out]), 0);
    let o = Path::new(&out);
    let metrics = fs::read_to_string(o.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("iter,env_steps,mean_return,mean_ep_len,policy_loss,value_loss,entropy,clip_frac"));
    let ck = read_checkpoint(&fs::read(o.join("checkpoint.bin")).unwrap()[..]).unwrap();
    assert_eq!(lines.count(), ck.meta.iterations);
    assert_eq!(ck.meta.iterations, 3);

    let report = fs::read_to_string(o.join("report.csv")).unwrap();
    let rows: Vec<&str> = report.lines().collect();
    assert_eq!(rows[0], "tap,arch,acc_x,acc_y,acc_mean,chance,n_test");
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("lstm_hidden,linear,"));
    assert!(rows[4].starts_with("lstm_cell,mlp3,"));
    assert_eq!(fs::read_to_string(o.join("report_eval.csv")).unwrap(), report);

    let ds = fs::metadata(o.join("datasets/lstm_cell.apds")).unwrap().len();
    assert_eq!(ds, worldprobe::io::dataset_file_size(9, 900, 8));
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(o.join("datasets/lstm_cell.json")).unwrap()).unwrap();
    assert_eq!(sidecar["config"]["seeds"]["collect"], 1);
    assert_eq!(sidecar["meta"]["checkpoint_id"].as_str().unwrap().len(), 16);

    // A rerun of eval alone reproduces the report; a tampered report is caught.
    assert_eq!(cli(&["eval", "--config", &cfg, "--out", &out]), 0);
    fs::write(o.join("report.csv"), report.replace("lstm_cell,mlp3", "lstm_cell,mlp3x")).unwrap();
    assert_eq!(cli(&["eval", "--config", &cfg, "--out", &out]), 2);

    assert_eq!(cli(&["render", "--config", &cfg, "--checkpoint", &o.join("checkpoint.bin").display().to_string(), "--frames", "5"]), 0);
    assert_eq!(cli(&["render", "--map", "ultimate", "--frames", "3"]), 0);
}

#[test]
fn dataset_with_wrong_width_is_reported() {
    let (_dir, cfg, out) = setup(TINY);
    let path = Path::new(&out).join("datasets/lstm_hidden.apds");
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    let mut ds = ActivationDataset::new("lstm_hidden", 3);
    for i in 0..300u32 {
        ds.push(&[i as f32, 0.0, 1.0], (i % 13 + 1) as u8, (i % 11 + 2) as u8).unwrap();
    }
    write_dataset(fs::File::create(&path).unwrap(), &ds).unwrap();
    assert_eq!(cli(&["probe", "--config", &cfg, "--out", &out]), 2);
    let c = ExperimentConfig { output_dir: out.into(), ..ExperimentConfig::from_toml(TINY).unwrap() };
    let err = worldprobe_cli::commands::probe(&c).unwrap_err();
    assert!(err.to_string().contains("dimension mismatch"), "{err}");
}

#[test]
fn deterministic_training_is_reproducible() {
    let (_d1, cfg, out1) = setup(TINY);
    let (_d2, _, out2) = setup(TINY);
    assert_eq!(cli(&["train", "--config", &cfg, "--out", &out1, "--deterministic"]), 0);
    assert_eq!(cli(&["train", "--config", &cfg, "--out", &out2, "--deterministic"]), 0);
    let a = fs::read(Path::new(&out1).join("checkpoint.bin")).unwrap();
    let b = fs::read(Path::new(&out2).join("checkpoint.bin")).unwrap();
    assert_eq!(a, b);
}
