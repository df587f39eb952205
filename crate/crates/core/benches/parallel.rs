//! Sequential vs parallel execution of the hot loops.
//!
//! Both modes produce identical results, so only time differs. Build with
//! `--no-default-features` to measure the rayon-free fallback on its own.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use worldprobe::agent::{AgentConfig, AgentNet};
use worldprobe::env::{MapKind, RoomConfig};
use worldprobe::nn::{gemm, MatRef};
use worldprobe::par::{set_gemm_exec, Exec};
use worldprobe::ppo::{collect_rollout, RolloutState};
use worldprobe::probe::collect_with;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn bench_gemm(c: &mut Criterion) {
    let (m, k, n) = (1024, 512, 512);
    let a: Vec<f32> = (0..m * k).map(|i| (i % 7) as f32 * 0.1).collect();
    let b: Vec<f32> = (0..k * n).map(|i| (i % 5) as f32 * 0.1).collect();
    let mut out = vec![0f32; m * n];
    let mut group = c.benchmark_group("gemm_1024x512x512");
    for (name, exec) in MODES {
        set_gemm_exec(exec);
        group.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| gemm(MatRef::new(&a, m, k), MatRef::new(&b, k, n), 0.0, black_box(&mut out)))
        });
    }
    group.finish();
}

fn bench_rollout(c: &mut Criterion) {
    let room = RoomConfig::new(MapKind::Random);
    let agent = AgentConfig::experiment3();
    let net = AgentNet::<f32>::build(&agent, 0).unwrap();
    let mut group = c.benchmark_group("rollout_16x32");
    group.sample_size(10);
    for (name, exec) in MODES {
        set_gemm_exec(exec);
        let mut state = RolloutState::new(&room, &net, 16, 1).unwrap();
        group.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| collect_rollout(&mut state, &net, 32, 32, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_collect(c: &mut Criterion) {
    let room = RoomConfig::new(MapKind::Random);
    let agent = AgentConfig::experiment3();
    let net = AgentNet::<f32>::build(&agent, 0).unwrap();
    let taps = vec!["lstm_hidden".to_string(), "lstm_cell".to_string()];
    let mut group = c.benchmark_group("collect_2048");
    group.sample_size(10);
    for (name, exec) in MODES {
        set_gemm_exec(exec);
        group.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| {
                let mut n = 0usize;
                collect_with(&net, &room, &taps, 2048, 3, exec, |_, _| {
                    n += 1;
                    Ok(())
                })
                .unwrap();
                black_box(n)
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_gemm, bench_rollout, bench_collect);
criterion_main!(benches);
