#![allow(dead_code)]

use pptrend::{make_bspline_basis, BasisSpec, Interval, PatternSeries, PointPattern, SeasonIndexer, TrendSpec};
use rand::Rng;

pub fn day() -> Interval {
    Interval::new(0.0, 24.0).unwrap()
}

pub fn cubic(interior: usize) -> BasisSpec {
    make_bspline_basis(day(), 3, interior).unwrap()
}

/// Uniform event times with 3..20 events per day.
pub fn random_series<R: Rng>(rng: &mut R, n: usize, d: usize, trend: TrendSpec) -> PatternSeries {
    let pats = (0..n)
        .map(|_| {
            let m = rng.random_range(3..20);
            PointPattern::new((0..m).map(|_| rng.random_range(0.0..24.0)).collect())
        })
        .collect();
    PatternSeries::new(pats, day(), SeasonIndexer::new(d, None).unwrap(), trend).unwrap()
}

pub fn random_point<R: Rng>(rng: &mut R, dim: usize, bound: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-bound..bound)).collect()
}
