//! Times the structured observed-cell solver against a dense Cholesky
//! baseline, plus the two end-to-end costs that dominate real fits: one
//! restricted-likelihood evaluation and one full separable fit.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use stlmm::covariance::dense_cov;
use stlmm::fastsolve::dense_solve;
use stlmm::{fit_reml, neg2_reml, solve_observed, FitOptions, ModelSpec};
use stlmm_bench::solve_case;

fn observed_solve(c: &mut Criterion) {
    let cases = [solve_case(17, 18, 15), solve_case(30, 30, 45)];
    let mut group = c.benchmark_group("observed_solve");
    group.sample_size(10);
    for case in &cases {
        let sigma = dense_cov(&case.product_sum, &case.data.design).unwrap();
        group.bench_with_input(
            BenchmarkId::new("dense_cholesky", &case.label),
            case,
            |b, case| {
                b.iter(|| dense_solve(black_box(&sigma), black_box(&case.rhs)).unwrap());
            },
        );
        group.bench_with_input(
            BenchmarkId::new("structured_product_sum", &case.label),
            case,
            |b, case| {
                b.iter(|| {
                    solve_observed(
                        black_box(&case.product_sum),
                        &case.data.design,
                        black_box(&case.rhs),
                    )
                    .unwrap()
                });
            },
        );
        group.bench_with_input(
            BenchmarkId::new("structured_separable", &case.label),
            case,
            |b, case| {
                b.iter(|| {
                    solve_observed(
                        black_box(&case.separable),
                        &case.data.design,
                        black_box(&case.rhs),
                    )
                    .unwrap()
                });
            },
        );
    }
    group.finish();
}

fn reml_objective(c: &mut Criterion) {
    let case = solve_case(30, 30, 45);
    c.bench_function("reml_objective/900_cells", |b| {
        b.iter(|| {
            neg2_reml(
                black_box(&case.product_sum),
                &case.data.design,
                &case.data.x_obs,
                &case.data.y_obs,
            )
            .unwrap()
        });
    });
}

fn separable_fit(c: &mut Criterion) {
    let case = solve_case(10, 10, 5);
    let mut group = c.benchmark_group("full_fit");
    group.sample_size(10);
    group.bench_function("separable_reml/100_cells", |b| {
        b.iter(|| {
            fit_reml(
                black_box(ModelSpec::Separable {
                    spatial: case.separable.spatial().kind(),
                    temporal: case.separable.temporal().kind(),
                }),
                &case.data.design,
                &case.data.x_obs,
                &case.data.y_obs,
                &FitOptions::default(),
            )
            .unwrap()
        });
    });
    group.finish();
}

criterion_group!(benches, observed_solve, reml_objective, separable_fit);
criterion_main!(benches);
