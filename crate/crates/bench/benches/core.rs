use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use pptrend::model::{fit, FitConfig, Params, WorkingLikelihood};
use pptrend::simulate::rng::stream;
use pptrend::simulate::{sample_pattern, CoxGenerator, LatentProcess, SimModel, THETA0};
use pptrend::{make_bspline_basis, Interval, QuadGrid, TrendSpec};

fn day() -> Interval {
    Interval::new(0.0, 24.0).unwrap()
}

fn basis_eval(c: &mut Criterion) {
    let basis = make_bspline_basis(day(), 3, 4).unwrap();
    c.bench_function("basis_eval_cubic_4_knots", |b| {
        let mut u = 0.0;
        b.iter(|| {
            u = (u + 0.731) % 24.0;
            black_box(basis.eval(black_box(u)).unwrap())
        })
    });
}

fn weekly_series() -> (pptrend::PatternSeries, pptrend::BasisSpec, QuadGrid) {
    let basis = make_bspline_basis(day(), 3, 4).unwrap();
    let grid = QuadGrid::for_basis(&basis, 10).unwrap();
    let theta: Vec<Vec<f64>> = (0..7)
        .map(|j| (0..basis.dim()).map(|k| -1.0 + 0.1 * ((j + k) % 5) as f64).collect())
        .collect();
    let gen = CoxGenerator {
        basis: basis.clone(),
        theta,
        trend: TrendSpec::residue(3, 364).unwrap(),
        eta: vec![1e-2, -5e-5, 5e-8],
        latent: LatentProcess::None,
        zeta: vec![0.0; basis.dim()],
    };
    (gen.simulate(365, 3).unwrap(), basis, grid)
}

fn likelihood(c: &mut Criterion) {
    let (series, basis, grid) = weekly_series();
    let lik = WorkingLikelihood::new(&series, &basis, &grid).unwrap();
    let params = Params::zeros(7, basis.dim(), 3);
    c.bench_function("objective_weekly_365", |b| b.iter(|| black_box(lik.objective(&params).unwrap())));
    c.bench_function("score_hessian_weekly_365", |b| b.iter(|| black_box(lik.evaluate(&params).unwrap())));
}

fn fitting(c: &mut Criterion) {
    let (series, basis, grid) = weekly_series();
    c.bench_function("fit_weekly_365", |b| {
        b.iter(|| black_box(fit(&series, &basis, &grid, &FitConfig::default()).unwrap()))
    });
    let model = SimModel::preset("iii", 300, 1).unwrap();
    let sim = model.simulate_replicate(0).unwrap();
    let g = model.grid().unwrap();
    c.bench_function("fit_trend_only_300", |b| {
        b.iter(|| black_box(fit(&sim, &model.basis, &g, &FitConfig::default()).unwrap()))
    });
}

fn sampling(c: &mut Criterion) {
    let basis = make_bspline_basis(day(), 3, 2).unwrap();
    let mut rng = stream(11);
    c.bench_function("sample_pattern_model_i_day", |b| {
        b.iter(|| black_box(sample_pattern(&THETA0, 2.0, &basis, &mut rng).unwrap()))
    });
}

criterion_group!(benches, basis_eval, likelihood, fitting, sampling);
criterion_main!(benches);
