//! Cost of one sweep of conditional inclusion probabilities as P grows, and
//! of whole sampler iterations. The sweep should scale roughly linearly in P
//! at fixed model size.

use bvs_bench::linear_fixture;
use bvs_core::chain::run_chain;
use bvs_core::mll::EvidenceModel;
use bvs_core::{seeded_rng, synthetic, SamplerConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("conditional_pips_sweep");
    for p in [100, 200, 400, 800] {
        let (data, gamma) = linear_fixture(500, p, 1);
        let mut model = EvidenceModel::linear(&data, 0.01, None);
        let all: Vec<usize> = (0..p).collect();
        let fact = model.factorize(gamma.active()).unwrap();
        model.conditional_pips(&fact, &gamma, &all, 0.01).unwrap();
        group.throughput(Throughput::Elements(p as u64));
        group.bench_with_input(BenchmarkId::from_parameter(p), &p, |b, _| {
            b.iter(|| black_box(model.conditional_pips(&fact, &gamma, &all, 0.01).unwrap()))
        });
    }
    group.finish();
}

fn iterations(c: &mut Criterion) {
    let mut group = c.benchmark_group("chain_1000_iterations");
    group.sample_size(10);
    let (linear, _) = linear_fixture(300, 200, 2);
    let mut cfg = SamplerConfig::for_p(200);
    cfg.iterations = 1000;
    cfg.burn_in = 100;
    cfg.store_samples = false;
    group.bench_function("linear_p200", |b| b.iter(|| run_chain(&linear, &cfg, &mut seeded_rng(3)).unwrap()));

    let counts = synthetic::binomial_logistic(300, 200, &[0, 50], &[0.8, -0.6], 0.0, 5, 4);
    group.bench_function("binomial_p200", |b| b.iter(|| run_chain(&counts, &cfg, &mut seeded_rng(5)).unwrap()));
    group.finish();
}

criterion_group!(benches, sweep, iterations);
criterion_main!(benches);
