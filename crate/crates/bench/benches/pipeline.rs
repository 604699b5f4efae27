use bkm_core::data::generate_task;
use bkm_core::kmeans::{balanced_kmeans, DEFAULT_MAX_ITER};
use bkm_core::{build_qubo, exact_posterior, reparametrize, sample_sa, AnnealSchedule};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample_sa");
    group.sample_size(10);
    for (k, n) in [(2, 5), (3, 5)] {
        let t = generate_task(k, n, 2, 2.0, 6.0, 7).unwrap();
        let p = build_qubo(&t, 4.0).unwrap();
        let sched = AnnealSchedule::default().with_reads(500);
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{k}x{n}")),
            &p,
            |b, p| b.iter(|| sample_sa(black_box(p), &sched, 1).unwrap()),
        );
    }
    group.finish();
}

fn posterior(c: &mut Criterion) {
    let mut group = c.benchmark_group("posterior");
    group.sample_size(10);
    let t = generate_task(3, 4, 2, 2.0, 6.0, 3).unwrap();
    group.bench_function("exact_3x4", |b| {
        b.iter(|| exact_posterior(black_box(&t)).unwrap())
    });
    let p = build_qubo(&t, 4.0).unwrap();
    let set = sample_sa(&p, &AnnealSchedule::default().with_reads(2000), 2).unwrap();
    group.bench_function("reparametrize_3x4", |b| {
        b.iter(|| reparametrize(black_box(&set), &t).unwrap())
    });
    group.finish();
}

fn kmeans(c: &mut Criterion) {
    let t = generate_task(3, 20, 2, 2.0, 6.0, 5).unwrap();
    c.bench_function("balanced_kmeans_3x20", |b| {
        b.iter(|| balanced_kmeans(black_box(&t), DEFAULT_MAX_ITER, 0).unwrap())
    });
}

criterion_group!(benches, sampling, posterior, kmeans);
criterion_main!(benches);
