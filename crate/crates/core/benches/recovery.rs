//! Benchmarks for the data-parallel inner loops, sized so both the rayon
//! build and the sequential fallback (`--no-default-features`) produce
//! comparable numbers.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use redasm_core::bounds::{best_subset_e, per_level_mu, SubsetStrategy};
use redasm_core::instances::{gen_random, oracle_radius_sample};
use redasm_core::solve::{solve, Algorithm, SolverConfig};

fn bench_per_level_mu(c: &mut Criterion) {
    let inst = gen_random(24, 48, 128, 11, 0.1).expect("instance");
    c.bench_function("bounds/per_level_mu_n24", |b| {
        b.iter(|| per_level_mu(&inst.hier, &inst.meas).unwrap())
    });
}

fn bench_subset_search(c: &mut Criterion) {
    let inst = gen_random(10, 20, 48, 12, 0.1).expect("instance");
    c.bench_function("bounds/exhaustive_subsets_n10", |b| {
        b.iter(|| best_subset_e(&inst.hier, &inst.meas, SubsetStrategy::Exhaustive).unwrap())
    });
}

fn bench_solvers(c: &mut Criterion) {
    let inst = gen_random(16, 32, 96, 13, 0.05).expect("instance");
    let mut group = c.benchmark_group("solve");
    for (name, algorithm) in [
        ("sequential_n16", Algorithm::Sequential),
        ("parallel_n16", Algorithm::Parallel),
    ] {
        group.bench_function(name, |b| {
            b.iter_batched(
                || SolverConfig {
                    algorithm,
                    max_iter: 500,
                    tol_stop: 1e-12,
                    trace_every: 501,
                    ..Default::default()
                },
                |config| solve(&inst.hier, &inst.meas, &config).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn bench_oracle(c: &mut Criterion) {
    let inst = gen_random(6, 12, 32, 14, 0.1).expect("instance");
    c.bench_function("oracle/radius_16_starts", |b| {
        b.iter(|| oracle_radius_sample(&inst, 16, 3).unwrap())
    });
}

criterion_group!(
    benches,
    bench_per_level_mu,
    bench_subset_search,
    bench_solvers,
    bench_oracle
);
criterion_main!(benches);
