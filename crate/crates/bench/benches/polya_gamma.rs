use bvs_core::pg::sample_pg;
use bvs_core::seeded_rng;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn draws(c: &mut Criterion) {
    let mut group = c.benchmark_group("polya_gamma_draw");
    for b in [1.0, 5.0, 16.0, 30.5, 200.0] {
        let mut rng = seeded_rng(11);
        group.bench_with_input(BenchmarkId::from_parameter(b), &b, |bench, &b| {
            bench.iter(|| black_box(sample_pg(&mut rng, b, 1.3).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, draws);
criterion_main!(benches);
