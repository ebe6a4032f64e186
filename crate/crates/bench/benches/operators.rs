use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use radwave::{apply_k, apply_l, apply_r, TruncationPolicy};
use radwave_bench::{datum, lattice, source};

fn operators(c: &mut Criterion) {
    let mut group = c.benchmark_group("operators");
    group.sample_size(10);
    for cells in [64, 128, 256] {
        let lat = lattice(cells);
        let d = datum(&lat);
        let src = source(&lat);
        let trunc = TruncationPolicy::for_lattice(&lat);
        group.bench_with_input(BenchmarkId::new("K", cells), &cells, |b, _| {
            b.iter(|| apply_k(&d, &lat).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("L", cells), &cells, |b, _| {
            b.iter(|| apply_l(&src))
        });
        group.bench_with_input(BenchmarkId::new("R", cells), &cells, |b, _| {
            b.iter(|| apply_r(&src, &trunc).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, operators);
criterion_main!(benches);
