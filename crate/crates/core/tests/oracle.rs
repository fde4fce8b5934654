mod common;

use common::day;
use pptrend::model::objective;
use pptrend::oracle::{fd_gradient, grid_maximize, mc_campbell, McEstimate, SimpsonObjective, TrueModel};
use pptrend::quadrature::moments;
use pptrend::simulate::{CoxGenerator, LatentProcess, THETA0};
use pptrend::{fit, make_bspline_basis, FitConfig, Params, QuadGrid, TrendSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_models(seed: u64, count: usize) -> Vec<TrueModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| TrueModel::random(&mut rng, common::cubic(2), 2, 4, 1, 2.0).unwrap())
        .collect()
}

#[test]
fn rho0_is_stationary_at_the_shifted_truth() {
    for m in random_models(1, 10) {
        let g = m.rho0_gradient(&m.params_star()).unwrap();
        let sup = g.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        assert!(sup < 1e-8, "gradient sup-norm {sup:e}");
        let alt = m.rho0_unweighted_linear_gradient(&m.params_star()).unwrap();
        let alt_sup = alt.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        assert!(alt_sup > 1e-3, "rejected form is also stationary ({alt_sup:e})");
    }
}

#[test]
fn rho0_gradient_agrees_with_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for m in random_models(3, 5) {
        let (d, p, q) = (m.d(), m.basis.dim(), m.eta0.len());
        let x = common::random_point(&mut rng, d * p + q, 1.0);
        let params = Params::from_slice(&x, d, p, q).unwrap();
        let g = m.rho0_gradient(&params).unwrap();
        let fd = fd_gradient(|y| m.rho0(&Params::from_slice(y, d, p, q).unwrap()).unwrap(), &x, 1e-5);
        let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6 * scale, "{a} vs {b}");
        }
        let fd_alt =
            fd_gradient(|y| m.rho0_unweighted_linear(&Params::from_slice(y, d, p, q).unwrap()).unwrap(), &x, 1e-5);
        for (a, b) in m.rho0_unweighted_linear_gradient(&params).unwrap().iter().zip(&fd_alt) {
            assert!((a - b).abs() < 1e-6 * scale);
        }
    }
}

#[test]
fn rho0_is_concave_along_segments() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let models = random_models(5, 5);
    for k in 0..50 {
        let m = &models[k % models.len()];
        let (d, p, q) = (m.d(), m.basis.dim(), m.eta0.len());
        let a = common::random_point(&mut rng, d * p + q, 1.5);
        let b = common::random_point(&mut rng, d * p + q, 1.5);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let f = |x: &[f64]| m.rho0(&Params::from_slice(x, d, p, q).unwrap()).unwrap();
        assert!(f(&mid) >= 0.5 * (f(&a) + f(&b)) - 1e-12 * f(&mid).abs());
    }
}

#[test]
fn rho0_is_the_mean_of_the_working_objective() {
    let basis = common::cubic(2);
    let grid = QuadGrid::for_basis(&basis, 10).unwrap();
    let theta0 = vec![vec![-1.0, 0.3, 0.8, 0.2, -0.5, -1.2], vec![-0.6, 0.1, 0.5, 0.6, 0.0, -0.8]];
    let m = TrueModel::new(basis.clone(), theta0, vec![0.0; 6], vec![0.2], 4, 200).unwrap();
    let gen = m.generator();
    let (d, p, q) = (2, 6, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut points = vec![m.params_star()];
    for _ in 0..2 {
        let mut x = m.params_star().to_vec();
        x.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
        points.push(Params::from_slice(&x, d, p, q).unwrap());
    }
    let series: Vec<_> = (0..30).map(|s| gen.simulate(2000, 500 + s).unwrap()).collect();
    for params in &points {
        let values: Vec<f64> = series.iter().map(|s| objective(s, params, &grid, &basis).unwrap()).collect();
        let est = McEstimate::from_samples(&values);
        let target = m.rho0(params).unwrap();
        assert!(est.agrees_with(target, 3.0), "{} ± {} vs {target}", est.mean, est.se);
    }
}

/// Lattice search refined around the previous best point, `levels` times.
fn zooming_search(f: impl Fn(&[f64]) -> f64, centre: &[f64], mut half: f64, resolution: usize, levels: usize) -> (Vec<f64>, f64) {
    let mut best = centre.to_vec();
    let mut spacing = 0.0;
    for _ in 0..levels {
        let bounds: Vec<(f64, f64)> = best.iter().map(|c| (c - half, c + half)).collect();
        best = grid_maximize(&f, &bounds, resolution).unwrap();
        spacing = 2.0 * half / (resolution - 1) as f64;
        half = 2.0 * spacing;
    }
    (best, spacing)
}

#[test]
fn newton_matches_grid_search_on_tiny_instance() {
    let basis = make_bspline_basis(day(), 1, 0).unwrap();
    let grid = QuadGrid::for_basis(&basis, 10).unwrap();
    let gen = CoxGenerator {
        basis: basis.clone(),
        theta: vec![vec![0.4, -0.6]],
        trend: TrendSpec::normalized(1, 10).unwrap(),
        eta: vec![0.7],
        latent: LatentProcess::None,
        zeta: vec![0.0; 2],
    };
    let series = gen.simulate(10, 42).unwrap();
    let newton = fit(&series, &basis, &grid, &FitConfig::default()).unwrap();
    assert!(newton.converged);
    let oracle = SimpsonObjective::new(&series, &basis, 50).unwrap();
    let f = |x: &[f64]| oracle.value(&Params::from_slice(x, 1, 2, 1).unwrap());
    let (best, spacing) = zooming_search(f, &[0.0, 0.0, 0.0], 3.0, 41, 4);
    assert!(spacing <= 1e-3);
    for (a, b) in best.iter().zip(newton.params.to_vec()) {
        assert!((a - b).abs() <= spacing, "{a} vs {b}");
    }
}

#[test]
fn campbell_identities() {
    let basis = common::cubic(2);
    let grid = QuadGrid::for_basis(&basis, 10).unwrap();
    let mom = moments(&basis, &grid, &THETA0).unwrap();

    let count = mc_campbell(&THETA0, 0.0, &basis, |_| 1.0, 10_000, 1).unwrap();
    assert!(count.agrees_with(mom.e, 3.0), "{count:?} vs {}", mom.e);

    let c = 0.5f64;
    let flat = vec![c.ln(); 6];
    let first = mc_campbell(&flat, 0.0, &basis, |u| u, 10_000, 2).unwrap();
    assert!(first.agrees_with(288.0 * c, 3.0), "{first:?}");

    let b1 = |u: f64| basis.eval(u).unwrap()[0];
    let tilted = mc_campbell(&THETA0, 0.0, &basis, b1, 10_000, 3).unwrap();
    assert!(tilted.agrees_with(mom.sigma[0], 3.0), "{tilted:?} vs {}", mom.sigma[0]);
}
