use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use infomarket_core::learning::{LearningConfig, PropensityState};
use infomarket_core::model::{self, Allocation};
use infomarket_core::{replica, rng, solver, MarketInstance, ModelParams, SolverOptions};

fn instance(n: usize, omega: usize) -> MarketInstance {
    MarketInstance::sample(&ModelParams::new(n, omega, 0.1, 3)).unwrap()
}

fn equilibrium(c: &mut Criterion) {
    let mut group = c.benchmark_group("equilibrium");
    for (n, omega) in [(16, 32), (64, 32), (256, 32)] {
        let inst = instance(n, omega);
        group.bench_function(format!("cd N={n} Omega={omega}"), |b| {
            b.iter(|| solver::solve(black_box(&inst), 0.1, &SolverOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn objective(c: &mut Criterion) {
    let inst = instance(128, 32);
    let alloc = Allocation::uniform(128, 0.5, 32.0);
    c.bench_function("hamiltonian gradient N=128 Omega=32", |b| {
        b.iter(|| model::hamiltonian_gradient(black_box(&inst), black_box(&alloc), 0.1).unwrap())
    });
}

fn learning_steps(c: &mut Criterion) {
    let inst = instance(32, 16);
    let config = LearningConfig::default();
    c.bench_function("1000 learning steps N=32 Omega=16", |b| {
        b.iter_batched(
            || PropensityState::initial(&inst, &config, &mut rng::seeded(1)),
            |mut state| {
                for t in 0..1000 {
                    state.step(&inst, t % 16, &config, 0.1, true);
                }
                state
            },
            BatchSize::SmallInput,
        )
    });
}

fn replica_curve(c: &mut Criterion) {
    let taus: Vec<f64> = (1..=300).map(|j| 0.01 * j as f64).collect();
    c.bench_function("fixed-eps branch, 300 points", |b| {
        b.iter(|| replica::solve_fixed_eps(0.1, 1.0, 1.0, black_box(&taus)))
    });
    c.bench_function("solve at load alpha=2", |b| b.iter(|| replica::solve_at_load(black_box(2.0), 0.1, 1.0, 1.0).unwrap()));
}

criterion_group!(benches, equilibrium, objective, learning_steps, replica_curve);
criterion_main!(benches);
