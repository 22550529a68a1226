use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use nsgmrf::model::SpatialModel;
use nsgmrf::posterior::Posterior;
use nsgmrf::predict::crps_gaussian;
use nsgmrf_bench::{nonstationary, observations, perturbed_theta, stationary_truth, us_grid};

fn objective(c: &mut Criterion) {
    let mut group = c.benchmark_group("log_posterior");
    group.sample_size(10);
    let grid = us_grid(100, 50);
    let obs = observations(&grid, 2000, 1);
    let stationary = SpatialModel::stationary(grid.clone()).unwrap();
    let ns = nonstationary(&grid, 8, 4);
    let cases = [("stationary", &stationary, stationary_truth()), ("8x4", &ns, perturbed_theta(&ns, 3))];
    for (name, model, theta) in &cases {
        let post = Posterior::new(model, &obs);
        post.log_posterior(theta).unwrap();
        group.bench_function(BenchmarkId::new("value", name), |b| {
            b.iter(|| post.log_posterior(black_box(theta)).unwrap())
        });
        group.bench_function(BenchmarkId::new("value_and_gradient", name), |b| {
            b.iter(|| post.value_and_gradient(black_box(theta)).unwrap())
        });
    }
    group.finish();
}

fn crps(c: &mut Criterion) {
    c.bench_function("crps_gaussian", |b| {
        b.iter(|| crps_gaussian(black_box(0.3), black_box(1.2), black_box(-0.4)).unwrap())
    });
}

criterion_group!(benches, objective, crps);
criterion_main!(benches);
