mod common;

use common::{cubic, day, random_point, random_series};
use nalgebra::SymmetricEigen;
use pptrend::covariance::plug_in_w;
use pptrend::model::{fit_from, WorkingLikelihood};
use pptrend::oracle::{fd_gradient, fd_jacobian};
use pptrend::simulate::SimModel;
use pptrend::{estimate_sandwich, fit, FitConfig, Params, PatternSeries, PointPattern, QuadGrid, SeasonIndexer, TrendSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cases() -> Vec<(PatternSeries, TrendSpec)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let normalized = TrendSpec::normalized(2, 60).unwrap();
    let residue = TrendSpec::residue(2, 6).unwrap();
    vec![
        (random_series(&mut rng, 60, 3, normalized), normalized),
        (random_series(&mut rng, 48, 3, residue), residue),
    ]
}

/// Random parameters with trend coordinates shrunk by the covariate scale.
fn random_params(rng: &mut ChaCha8Rng, d: usize, p: usize, trend: &TrendSpec) -> Vec<f64> {
    let mut x = random_point(rng, d * p + trend.q, 1.0);
    for (k, s) in trend.column_scales().into_iter().enumerate() {
        x[d * p + k] /= s;
    }
    x
}

#[test]
fn score_matches_finite_differences() {
    let basis = cubic(2);
    let grid = QuadGrid::for_basis(&basis, 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for (series, trend) in cases() {
        let lik = WorkingLikelihood::new(&series, &basis, &grid).unwrap();
        let (d, p, q) = (series.d(), basis.dim(), trend.q);
        for _ in 0..20 {
            let x = random_params(&mut rng, d, p, &trend);
            let f = |y: &[f64]| lik.objective(&Params::from_slice(y, d, p, q).unwrap()).unwrap();
            let fd = fd_gradient(f, &x, 1e-6);
            let g = lik.score(&Params::from_slice(&x, d, p, q).unwrap()).unwrap();
            let scale = g.amax();
            let err = g.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
            worst = worst.max(err);
        }
    }
    assert!(worst < 1e-6, "worst relative score error {worst:e}");
}

#[test]
fn hessian_matches_finite_differences_and_is_concave() {
    let basis = cubic(2);
    let grid = QuadGrid::for_basis(&basis, 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for (series, trend) in cases() {
        let lik = WorkingLikelihood::new(&series, &basis, &grid).unwrap();
        let (d, p, q) = (series.d(), basis.dim(), trend.q);
        for _ in 0..20 {
            let x = random_params(&mut rng, d, p, &trend);
            let params = Params::from_slice(&x, d, p, q).unwrap();
            let h = lik.hessian(&params).unwrap();
            let jac = fd_jacobian(
                |y: &[f64]| lik.score(&Params::from_slice(y, d, p, q).unwrap()).unwrap().as_slice().to_vec(),
                &x,
                1e-5,
            );
            // Entries far below the largest are judged relative to a floor so
            // that structural zeros and near-zeros do not divide by ~0.
            let floor = 1e-3 * h.amax();
            for i in 0..x.len() {
                for k in 0..x.len() {
                    let err = (jac[i][k] - h[(i, k)]).abs() / h[(i, k)].abs().max(floor);
                    worst = worst.max(err);
                }
            }
            let eig = SymmetricEigen::new(h.clone());
            assert!(eig.eigenvalues.max() <= 1e-10, "positive eigenvalue {}", eig.eigenvalues.max());
        }
    }
    assert!(worst < 1e-5, "worst relative Hessian error {worst:e}");
}

#[test]
fn plug_in_w_equals_hessian_over_complete_cycles() {
    let basis = cubic(2);
    let grid = QuadGrid::for_basis(&basis, 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let trend = TrendSpec::residue(2, 6).unwrap();
    let series = random_series(&mut rng, 60, 3, trend);
    let res = fit(&series, &basis, &grid, &FitConfig::default()).unwrap();
    assert!(res.converged);
    let w = plug_in_w(&res, &series, &basis, &grid).unwrap();
    let h = WorkingLikelihood::new(&series, &basis, &grid).unwrap().hessian(&res.params).unwrap();
    let err = (&w - &h).amax() / h.amax();
    assert!(err < 1e-8, "relative difference {err:e}");
    assert!(SymmetricEigen::new(-w).eigenvalues.min() > 0.0);
}

#[test]
fn score_vanishes_at_fit() {
    let basis = cubic(2);
    let grid = QuadGrid::for_basis(&basis, 10).unwrap();
    for (series, _) in cases() {
        let cfg = FitConfig::default();
        let res = fit(&series, &basis, &grid, &cfg).unwrap();
        assert!(res.converged);
        assert!(res.gradient_norm <= cfg.tol);
        assert!(res.trace.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn initial_shift_does_not_move_the_maximizer() {
    let basis = cubic(2);
    let grid = QuadGrid::for_basis(&basis, 10).unwrap();
    for (series, trend) in cases() {
        let (d, p, q) = (series.d(), basis.dim(), trend.q);
        let base = fit(&series, &basis, &grid, &FitConfig::default()).unwrap();
        for c in [-3.0, 1.5] {
            let mut init = Params::zeros(d, p, q);
            init.theta.iter_mut().for_each(|row| row.iter_mut().for_each(|v| *v = c));
            let shifted = fit_from(&series, &basis, &grid, &FitConfig::default(), init).unwrap();
            assert!(shifted.converged);
            for (a, b) in base.params.to_vec().iter().zip(shifted.params.to_vec()) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b} after shift {c}");
            }
        }
    }
}

#[test]
fn empty_day_adds_only_its_mass_term() {
    let basis = cubic(2);
    let grid = QuadGrid::for_basis(&basis, 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 40;
    let series = random_series(&mut rng, n, 2, TrendSpec::residue(1, 4).unwrap());
    let mut longer = series.clone();
    longer.push(PointPattern::default()).unwrap();
    let (d, p, q) = (2, basis.dim(), 1);
    let params = Params::from_slice(&random_point(&mut rng, d * p + q, 0.5), d, p, q).unwrap();
    let short = WorkingLikelihood::new(&series, &basis, &grid).unwrap().objective(&params).unwrap();
    let long = WorkingLikelihood::new(&longer, &basis, &grid).unwrap().objective(&params).unwrap();
    // Day 41 falls in season 1 with residue 1, so b = 0 and the mass term is ∫exp(θ₁ᵀβ).
    let mass = grid.integrate_fn(|u| basis.eval_spline(&params.theta[0], u).unwrap().exp());
    let expected = (short * n as f64 - mass) / (n + 1) as f64;
    assert!((long - expected).abs() < 1e-12 * long.abs().max(1.0));
    let res = fit(&longer, &basis, &grid, &FitConfig::default()).unwrap();
    assert!(res.converged && res.params.is_finite());
}

/// Fits of model (i) at n = 3000: Euclidean errors `‖θ̂ − θ₀‖` and the
/// sandwich covariance of the first fit.
fn large_n_fits() -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut errors = Vec::new();
    let mut omega = None;
    for seed in 0..50 {
        let model = SimModel::preset("i", 3000, 1000 + seed).unwrap();
        let series = model.simulate_replicate(0).unwrap();
        let grid = model.grid().unwrap();
        let res = fit(&series, &model.basis, &grid, &FitConfig::default()).unwrap();
        assert!(res.converged);
        if omega.is_none() {
            omega = Some(estimate_sandwich(&res, &series, &model.basis, &grid).unwrap().blocks().theta[0].clone());
        }
        let dist = res.params.theta[0]
            .iter()
            .zip(&model.theta0)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        errors.push(dist);
    }
    (errors, omega.unwrap())
}

#[test]
fn consistency_at_large_n() {
    let (errors, _) = large_n_fits();
    let within = errors.iter().filter(|&&e| e < 0.1).count();
    assert!(within >= 48, "only {within} of 50 fits within 0.1 of the truth");
}

#[test]
fn large_n_spread_matches_sandwich() {
    let (errors, omega) = large_n_fits();
    let predicted = ((0..omega.len()).map(|i| omega[i][i]).sum::<f64>() / 3000.0).sqrt();
    let observed = (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt();
    assert!((observed / predicted - 1.0).abs() < 0.2, "observed {observed}, predicted {predicted}");
}

/// Series without a trend whose day `t` takes the pattern of a day in season
/// `perm[j(t)]`; returns it with the original.
fn relabeled(seed: u64, d: usize, cycles: usize, perm: &[usize]) -> (PatternSeries, PatternSeries) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trend = TrendSpec::residue(0, d).unwrap();
    let original = random_series(&mut rng, d * cycles, d, trend);
    let pats = (0..d * cycles)
        .map(|i| {
            let (cycle, j) = (i / d, i % d);
            original.patterns()[cycle * d + perm[j]].clone()
        })
        .collect();
    let ix = SeasonIndexer::new(d, None).unwrap();
    (original, PatternSeries::new(pats, day(), ix, trend).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn season_relabeling_permutes_rows(seed in 0u64..1000, perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
        let basis = cubic(2);
        let grid = QuadGrid::for_basis(&basis, 10).unwrap();
        let (original, permuted) = relabeled(seed, 4, 12, &perm);
        let a = fit(&original, &basis, &grid, &FitConfig::default()).unwrap();
        let b = fit(&permuted, &basis, &grid, &FitConfig::default()).unwrap();
        prop_assert!(a.converged && b.converged);
        for (j, &src) in perm.iter().enumerate() {
            for (x, y) in b.params.theta[j].iter().zip(&a.params.theta[src]) {
                prop_assert!((x - y).abs() < 1e-8);
            }
        }
        prop_assert_eq!(a.params.eta.len(), 0);
    }
}
