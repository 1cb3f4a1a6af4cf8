use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sideinfo_bench::{channel, description, skewed_kernel, wz_source};
use sideinfo_core::ba::{ba_capacity, wz_primal, SolveOptions};
use sideinfo_core::case2::{inner_max, Case2Options};
use sideinfo_core::gp::{wz_rate_via_gp, GpOptions};

fn capacity(c: &mut Criterion) {
    let mut g = c.benchmark_group("ba_capacity");
    for n in [4, 16, 64] {
        let k = skewed_kernel(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &k, |b, k| {
            b.iter(|| ba_capacity(k, &SolveOptions::default()).unwrap())
        });
    }
    g.finish();
}

fn inner(c: &mut Criterion) {
    let ch = channel();
    let w = description(&ch);
    let opts = Case2Options::default();
    c.bench_function("case2_inner_max", |b| b.iter(|| inner_max(&ch, &w, &opts).unwrap()));
}

fn wyner_ziv(c: &mut Criterion) {
    let src = wz_source();
    let mut g = c.benchmark_group("wyner_ziv");
    g.bench_function("primal", |b| b.iter(|| wz_primal(&src, 0.1, &SolveOptions::default()).unwrap()));
    g.bench_function("gp", |b| b.iter(|| wz_rate_via_gp(&src, 0.1, &GpOptions::default()).unwrap()));
    g.finish();
}

criterion_group!(benches, capacity, inner, wyner_ziv);
criterion_main!(benches);
