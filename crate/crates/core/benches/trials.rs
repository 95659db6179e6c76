use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fclsim::parallel::map_sequential;
use fclsim::sim::{self, SimConfig};

fn small_config() -> SimConfig {
    let mut c = SimConfig::desk();
    c.n_agents = 100;
    c.days = 5;
    c
}

fn trial(cfg: &SimConfig, seed: u64) -> usize {
    let mut c = cfg.clone();
    c.seed = seed;
    sim::run(&c).expect("valid config").records.len()
}

fn bench_trials(c: &mut Criterion) {
    let cfg = small_config();
    let seeds: Vec<u64> = (0..8).collect();
    let mut group = c.benchmark_group("trials");
    group.sample_size(10);
    group.bench_with_input(BenchmarkId::new("sequential", seeds.len()), &seeds, |b, s| {
        b.iter(|| map_sequential(black_box(s), |&seed| trial(&cfg, seed)))
    });
    #[cfg(feature = "parallel")]
    group.bench_with_input(BenchmarkId::new("parallel", seeds.len()), &seeds, |b, s| {
        b.iter(|| fclsim::parallel::map_parallel(black_box(s), None, |&seed| trial(&cfg, seed)))
    });
    group.finish();
}

criterion_group!(benches, bench_trials);
criterion_main!(benches);
