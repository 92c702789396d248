use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use unimeas_bench::Fixture;
use unimeas_core::ensemble::{environment_spread, mechanism_spread};
use unimeas_core::mechanism::{apply_mechanism, build_perturbed_mechanism};
use unimeas_core::{appendix_chain, diamond_distance_unitary, noisy_report};

fn mechanism(c: &mut Criterion) {
    let mut group = c.benchmark_group("mechanism");
    for d_s in [2, 3] {
        let fx = Fixture::new(d_s, 0.01);
        group.bench_with_input(BenchmarkId::new("apply", fx.dim()), &fx, |b, fx| {
            b.iter(|| apply_mechanism(&fx.mechanism, &fx.rho_s, &fx.rho_e, &fx.scenario).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("build_perturbed", fx.dim()), &fx, |b, fx| {
            b.iter(|| build_perturbed_mechanism(&fx.scenario, black_box(0.01)).unwrap())
        });
    }
    group.finish();
}

fn bounds(c: &mut Criterion) {
    let mut group = c.benchmark_group("bounds");
    for d_s in [2, 3] {
        let fx = Fixture::new(d_s, 0.01);
        group.bench_with_input(BenchmarkId::new("appendix_chain", fx.dim()), &fx, |b, fx| {
            b.iter(|| appendix_chain(&fx.mechanism, &fx.rho_s, &fx.rho_s_prime, &fx.rho_e, &fx.scenario).unwrap())
        });
    }
    group.finish();
}

fn diamond(c: &mut Criterion) {
    let mut group = c.benchmark_group("diamond");
    for d_s in [2, 3] {
        let fx = Fixture::new(d_s, 0.01);
        let other = fx.mechanism.jittered(&fx.scenario, 0.3, 5).unwrap();
        group.bench_with_input(BenchmarkId::new("unitary", fx.dim()), &fx, |b, fx| {
            b.iter(|| diamond_distance_unitary(fx.mechanism.matrix(), other.matrix()).unwrap())
        });
    }
    group.finish();
}

fn noisy(c: &mut Criterion) {
    let mut group = c.benchmark_group("noisy");
    group.sample_size(10);
    for d_s in [2, 3] {
        let fx = Fixture::new(d_s, 0.01);
        let mech = mechanism_spread(&fx.mechanism, &fx.scenario, 5, 0.1, 1).unwrap();
        let env = environment_spread(&fx.rho_e, &fx.scenario, 5, 0.05, 2).unwrap();
        group.bench_with_input(BenchmarkId::new("report_5x5", fx.dim()), &fx, |b, fx| {
            b.iter(|| noisy_report(&mech, &env, &fx.rho_s, &fx.rho_s_prime, &fx.scenario).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, mechanism, bounds, diamond, noisy);
criterion_main!(benches);
