use criterion::{criterion_group, criterion_main, Criterion};
use habinv::functional::Evaluator;
use habinv::{habitat_to_field, principal_eigenvalue};
use habinv_bench::fixture;
use std::hint::black_box;

fn evaluate_g(c: &mut Criterion) {
    let mut group = c.benchmark_group("evaluate_G");
    group.sample_size(20);
    for (label, preset, res) in [
        ("1d_201", "example1", None),
        ("2d_81", "example3", Some((vec![81, 81], 1e-3))),
        ("2d_101", "example3", Some((vec![101, 101], 1e-3))),
    ] {
        let sim = fixture(preset, res);
        let ev = Evaluator::new(&sim.measurements, &sim.space).unwrap();
        let candidate = sim.space.uniform(1);
        group.bench_function(label, |b| {
            b.iter(|| ev.evaluate(black_box(&candidate)).unwrap())
        });
    }
    group.finish();
}

fn eigenvalue(c: &mut Criterion) {
    let mut group = c.benchmark_group("principal_eigenvalue");
    group.sample_size(10);
    for (label, preset) in [("1d_201", "example1"), ("2d_101", "example3")] {
        let sim = fixture(preset, None);
        let mu = habitat_to_field(&sim.space, &sim.truth, &sim.grid).unwrap();
        group.bench_function(label, |b| {
            b.iter(|| principal_eigenvalue(&sim.grid, black_box(&mu), 1.0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, evaluate_g, eigenvalue);
criterion_main!(benches);
