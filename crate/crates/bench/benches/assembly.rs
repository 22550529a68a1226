use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use nsgmrf::sparse::{CholFactor, Ordering};
use nsgmrf::spde::SpdeOperator;
use nsgmrf_bench::{nonstationary, perturbed_theta, us_grid};

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assemble_q");
    for (m, n) in [(100, 50), (200, 100)] {
        let grid = us_grid(m, n);
        let model = nonstationary(&grid, 8, 4);
        let fields = model.fields(&perturbed_theta(&model, 1)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(format!("{m}x{n}")), &fields, |b, f| {
            b.iter(|| SpdeOperator::assemble_with(&grid, model.pattern(), black_box(f)).unwrap())
        });
    }
    group.finish();
}

fn factorization(c: &mut Criterion) {
    let mut group = c.benchmark_group("cholesky");
    group.sample_size(10);
    for (m, n) in [(100, 50), (200, 100)] {
        let grid = us_grid(m, n);
        let model = nonstationary(&grid, 8, 4);
        let op = model.operator(&model.fields(&perturbed_theta(&model, 2)).unwrap()).unwrap();
        let first = CholFactor::factorize(op.q(), &Ordering::Amd).unwrap();
        let symbolic = first.symbolic().clone();
        let label = format!("{m}x{n}");
        group.bench_function(BenchmarkId::new("numeric", &label), |b| {
            b.iter(|| symbolic.factorize(black_box(op.q())).unwrap())
        });
        group.bench_function(BenchmarkId::new("selected_inverse", &label), |b| b.iter(|| first.selected_inverse()));
    }
    group.finish();
}

criterion_group!(benches, assembly, factorization);
criterion_main!(benches);
