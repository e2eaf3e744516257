//! Ensemble throughput on a single-thread pool versus the full rayon pool.
//!
//! Built without the `parallel` feature both groups run the serial path.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPoolBuilder;
use skewdyn::attractor::{pullback, PullbackSpec, SeedBox};
use skewdyn::base::sample_orbit;
use skewdyn::models;
use skewdyn::skew::{lyapunov_estimate, LyapunovSample, Sampling};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("serial", ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("parallel", ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn bench_lyapunov(c: &mut Criterion) {
    let sys = models::builtin("affine_random").unwrap();
    let samples: Vec<_> = (0..64)
        .map(|s| LyapunovSample { orbit: sample_orbit(&sys.base, 1000, s).unwrap().shift(-1000).unwrap(), xi0: 0.0, y0: vec![0.0] })
        .collect();
    let mut group = c.benchmark_group("lyapunov_64x1000");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| lyapunov_estimate(&sys, black_box(&samples), 1000, Sampling::SeedBox).unwrap()))
        });
    }
    group.finish();
}

fn bench_pullback(c: &mut Criterion) {
    let sys = models::builtin("random_matrix").unwrap();
    let orbit = sample_orbit(&sys.base, 400, 1).unwrap();
    let spec = PullbackSpec { depth: 60, seed_box: SeedBox::cube(-1.0, 1.0, 2), samples_per_axis: 4, grid: 64 };
    let times: Vec<i64> = (0..32).collect();
    let mut group = c.benchmark_group("pullback_64cells_32times");
    group.sample_size(20);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| pullback(&sys, &orbit, black_box(&spec), &times).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_lyapunov, bench_pullback);
criterion_main!(benches);
