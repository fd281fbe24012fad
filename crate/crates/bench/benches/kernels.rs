//! Benchmarks for the three hot paths: penalized rate minimization,
//! exact soft-covering TV enumeration, and the protocol security audit.

use criterion::{criterion_group, criterion_main, Criterion};

use synthcascade_bench::{binary_pair, correlated_triple, task3_scheme};
use synthcascade_core::protocol::{run_protocol_counting, security_audit};
use synthcascade_core::region::min_weighted_rates;
use synthcascade_core::softcover::cloud_mixing_tv;
use synthcascade_core::{Budget, OptimizerConfig};

fn bench_weighted_rates(c: &mut Criterion) {
    let q = correlated_triple();
    let cfg = OptimizerConfig {
        restarts: 2,
        penalty_schedule: vec![10.0, 100.0, 1000.0],
        iters_per_stage: 150,
        card_ladder: Some(vec![(2, 2)]),
        seed: 3,
        ..Default::default()
    };
    c.bench_function("weighted_rate_minimization", |b| {
        b.iter(|| min_weighted_rates(&q, (1.0, 1.0, 1.0), &cfg).unwrap())
    });
}

fn bench_cloud_mixing(c: &mut Criterion) {
    let q = binary_pair();
    let budget = Budget::default();
    c.bench_function("cloud_mixing_tv_n8", |b| {
        b.iter(|| cloud_mixing_tv(&q, 0.8, 8, 4, 29, &budget).unwrap())
    });
}

fn bench_security_audit(c: &mut Criterion) {
    let (scheme, codebook) = task3_scheme(2);
    let budget = Budget::default();
    c.bench_function("security_audit_n2", |b| {
        b.iter(|| security_audit(&scheme, &codebook, &budget).unwrap())
    });
}

fn bench_protocol_episodes(c: &mut Criterion) {
    let (scheme, codebook) = task3_scheme(2);
    c.bench_function("protocol_64_episodes_n2", |b| {
        b.iter(|| run_protocol_counting(&scheme, &codebook, 64, 4242).unwrap())
    });
}

criterion_group!(
    kernels,
    bench_weighted_rates,
    bench_cloud_mixing,
    bench_security_audit,
    bench_protocol_episodes
);
criterion_main!(kernels);
