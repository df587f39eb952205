use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::agent::{AgentConfig, AgentNet};
use crate::env::{MapKind, RoomConfig};
use crate::nn::Tensor;
use crate::par::Exec;

fn one_hot_dataset(n: usize, seed: u64) -> ActivationDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = ActivationDataset::new("onehot", 2 * GRID);
    for _ in 0..n {
        let (x, y) = (rng.random_range(0..GRID as u8), rng.random_range(0..GRID as u8));
        let mut v = vec![0f32; 2 * GRID];
        v[x as usize] = 1.0;
        v[GRID + y as usize] = 1.0;
        ds.push(&v, x, y).unwrap();
    }
    ds
}

fn noise_dataset(n: usize, dim: usize, seed: u64) -> ActivationDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = ActivationDataset::new("noise", dim);
    for _ in 0..n {
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        ds.push(&v, rng.random_range(0..GRID as u8), rng.random_range(0..GRID as u8)).unwrap();
    }
    ds
}

#[test]
fn chance_levels_match_table_captions() {
    let pct = |m| (chance_level(m) * 1000.0).round() / 10.0;
    assert_eq!(pct(0), 6.7);
    assert_eq!(pct(1), 7.7);
    assert_eq!(pct(2), 9.1);
}

#[test]
fn boundary_filter_keeps_inner_cells() {
    let ds = one_hot_dataset(3000, 1);
    assert_eq!(filter_boundary(&ds, 0).unwrap().xs, ds.xs);
    for m in [1u8, 2] {
        let f = filter_boundary(&ds, m).unwrap();
        f.validate().unwrap();
        assert_eq!(f.margin, m);
        let mut seen = std::collections::BTreeSet::new();
        seen.extend(f.xs.iter().copied());
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), (m..15 - m).collect::<Vec<_>>());
    }
    assert!(filter_boundary(&ds, 3).is_err());
    let mut corner = ActivationDataset::new("c", 1);
    corner.push(&[0.0], 0, 7).unwrap();
    assert!(filter_boundary(&corner, 1).is_err());
}

#[test]
fn split_sizes_follow_the_documented_ratio() {
    assert_eq!(split_sizes(230_000, 200_000, 30_000).unwrap(), (200_000, 30_000));
    assert_eq!(split_sizes(100_000, 200_000, 30_000).unwrap(), (86_956, 13_043));
    assert!(split_sizes(5, 200_000, 30_000).is_err());
}

#[test]
fn split_is_disjoint_and_seeded() {
    let mut ds = ActivationDataset::new("id", 1);
    for i in 0..2300 {
        ds.push(&[i as f32], (i % 15) as u8, 0).unwrap();
    }
    let (tr, te) = split_dataset(&ds, 2000, 300, 9).unwrap();
    assert_eq!((tr.len(), te.len()), (2000, 300));
    let ids: std::collections::HashSet<u32> = tr.activations.iter().map(|&v| v as u32).collect();
    assert_eq!(ids.len(), 2000);
    assert!(te.activations.iter().all(|v| !ids.contains(&(*v as u32))));
    let (tr2, te2) = split_dataset(&ds, 2000, 300, 9).unwrap();
    assert_eq!((tr, te), (tr2, te2));
}

#[test]
fn one_hot_positions_are_decoded() {
    let (tr, te) = split_dataset(&one_hot_dataset(25_000, 2), 20_000, 5_000, 0).unwrap();
    let p = train_probe(&tr, &ProbeConfig::linear()).unwrap();
    let r = evaluate_probe(&p.probe, &te).unwrap();
    assert!(r.acc_x >= 0.99 && r.acc_y >= 0.99, "{r:?}");
    assert!(p.epoch_losses.last() <= p.epoch_losses.first());
}

#[test]
fn noise_activations_stay_at_chance() {
    let (tr, te) = split_dataset(&noise_dataset(12_000, 32, 3), 9_000, 3_000, 0).unwrap();
    for cfg in [ProbeConfig { epochs: 10, ..ProbeConfig::linear() }, ProbeConfig { epochs: 10, ..ProbeConfig::mlp3() }] {
        let r = evaluate_probe(&train_probe(&tr, &cfg).unwrap().probe, &te).unwrap();
        assert!((r.acc_mean - r.chance).abs() < 0.03, "{r:?}");
    }
}

#[test]
fn probe_training_is_deterministic() {
    let (tr, te) = split_dataset(&noise_dataset(600, 8, 4), 500, 100, 1).unwrap();
    let cfg = ProbeConfig { epochs: 3, batch_size: 64, ..ProbeConfig::mlp3() };
    let a = evaluate_probe(&train_probe(&tr, &cfg).unwrap().probe, &te).unwrap();
    let b = evaluate_probe(&train_probe(&tr, &cfg).unwrap().probe, &te).unwrap();
    assert_eq!(a, b);
}

fn linear_probe_with(w: Vec<f32>, b: Vec<f32>, dim: usize) -> Probe {
    Probe::from_params(
        &ProbeConfig::linear(),
        dim,
        vec![
            ("out.weight".into(), Tensor::new(vec![2 * GRID, dim], w).unwrap()),
            ("out.bias".into(), Tensor::new(vec![2 * GRID], b).unwrap()),
        ],
    )
    .unwrap()
}

#[test]
fn oracle_and_constant_probes() {
    let ds = one_hot_dataset(500, 5);
    let d = 2 * GRID;
    let mut eye = vec![0f32; d * d];
    (0..d).for_each(|i| eye[i * d + i] = 1.0);
    let oracle = linear_probe_with(eye.clone(), vec![0.0; d], d);
    let r = evaluate_probe(&oracle, &ds).unwrap();
    assert_eq!((r.acc_x, r.acc_y), (1.0, 1.0));

    let flat = linear_probe_with(vec![0.0; d * d], vec![0.0; d], d);
    let r = evaluate_probe(&flat, &ds).unwrap();
    let freq = |v: &[u8]| v.iter().filter(|&&c| c == 0).count() as f64 / v.len() as f64;
    assert_eq!(r.acc_x, freq(&ds.xs));
    assert_eq!(r.acc_y, freq(&ds.ys));

    // Shifting one head's logits by a constant leaves every argmax alone.
    let mut shifted = vec![0f32; d];
    shifted[..GRID].iter_mut().for_each(|b| *b = 3.5);
    let moved = linear_probe_with(eye, shifted, d);
    assert_eq!(evaluate_probe(&moved, &ds).unwrap().acc_x, 1.0);
}

#[test]
fn evaluation_rejects_bad_inputs() {
    let p = Probe::new(4, &ProbeConfig::linear()).unwrap();
    assert!(evaluate_probe(&p, &ActivationDataset::new("e", 4)).is_err());
    assert!(evaluate_probe(&p, &one_hot_dataset(3, 0)).is_err());
    assert!(Probe::new(4, &ProbeConfig { epochs: 0, ..ProbeConfig::linear() }).is_err());
}

fn tiny_agent() -> AgentConfig {
    AgentConfig {
        embed_dim: 4,
        conv_channels: vec![4, 4],
        hidden_dim: 16,
        lstm_size: 8,
        ..AgentConfig::experiment3()
    }
}

#[test]
fn collection_is_exact_and_deterministic() {
    let room = RoomConfig::new(MapKind::Random);
    let net = AgentNet::<f32>::build(&tiny_agent(), 3).unwrap();
    let taps = vec!["lstm_cell".to_string(), "linear1".to_string()];
    let a = collect_activations(&net, &room, &taps, 100, 8, Exec::Sequential, "t").unwrap();
    let b = collect_activations(&net, &room, &taps, 100, 8, Exec::Parallel, "t").unwrap();
    assert_eq!(a, b);
    assert_eq!(a[0].len(), 100);
    assert_eq!((a[0].dim, a[1].dim), (8, 16));
    assert_eq!(a[0].xs, a[1].xs);
    a[0].validate().unwrap();
    let err = collect_activations(&net, &room, &["conv9".into()], 10, 0, Exec::Sequential, "t").unwrap_err();
    assert!(err.to_string().contains("lstm_cell"), "{err}");
}

#[test]
fn lstm_tap_width_on_experiment_two_agent() {
    assert_eq!(AgentConfig::experiment2().tap_dim("lstm_hidden").unwrap(), 512);
}
