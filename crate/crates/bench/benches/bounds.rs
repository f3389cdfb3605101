use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use stein_wilks::mc::{chisq_expectation, estimate_distance};
use stein_wilks::{
    assemble_bound, exponential_corollary_bound, normal_corollary_bound, Exponential, Normal,
    OracleSettings, TestFunction,
};

fn bounds(c: &mut Criterion) {
    let h = TestFunction::ht();
    let settings = OracleSettings::default();
    c.bench_function("assemble_exponential", |b| {
        b.iter(|| assemble_bound(&Exponential, black_box(&[3.0]), 100_000, 1, &h, None, &settings).unwrap())
    });
    c.bench_function("assemble_normal", |b| {
        b.iter(|| assemble_bound(&Normal, black_box(&[0.0, 1.0]), 100_000, 1, &h, Some(0.5), &settings).unwrap())
    });
    c.bench_function("corollaries", |b| {
        b.iter(|| {
            exponential_corollary_bound(black_box(3.0), 100_000, &h.norms, true)
                + normal_corollary_bound(black_box(1.0), 100_000, &h.norms).unwrap()
        })
    });
}

fn simulation(c: &mut Criterion) {
    let h = TestFunction::ht();
    c.bench_function("chisq_expectation_r3", |b| b.iter(|| chisq_expectation(&h, black_box(3)).unwrap()));
    let mut group = c.benchmark_group("simulation");
    group.sample_size(10);
    group.bench_function("exponential_n100_10k", |b| {
        b.iter(|| estimate_distance(&Exponential, &[3.0], black_box(100), 1, &h, 10_000, 7).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bounds, simulation);
criterion_main!(benches);
