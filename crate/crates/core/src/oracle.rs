//! Slow reference computations for testing: finite differences, the
//! population objective, lattice maximization and Monte Carlo moments.
//!
//! Integrals here use composite Simpson rules and never touch the Gauss
//! quadrature tables of the main path.

use rand::Rng;

use crate::basis::{BasisSpec, SeasonIndexer, TrendSpec};
use crate::error::{Error, Result};
use crate::model::{dot, Params, PatternSeries};
use crate::simulate::rng::substream;
use crate::simulate::{sample_pattern, CoxGenerator, LatentProcess};

/// Largest lattice accepted by [`grid_maximize`].
pub const GRID_BUDGET: u128 = 10_000_000;

/// Central-difference gradient.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "step must be positive");
    let mut x = at.to_vec();
    (0..at.len())
        .map(|i| {
            x[i] = at[i] + h;
            let up = f(&x);
            x[i] = at[i] - h;
            let down = f(&x);
            x[i] = at[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Jacobian of a vector function; row `i` holds the
/// derivatives of component `i`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, at: &[f64], h: f64) -> Vec<Vec<f64>> {
    assert!(h > 0.0, "step must be positive");
    let mut x = at.to_vec();
    let mut cols = Vec::with_capacity(at.len());
    for k in 0..at.len() {
        x[k] = at[k] + h;
        let up = f(&x);
        x[k] = at[k] - h;
        let down = f(&x);
        x[k] = at[k];
        cols.push(up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
    }
    let m = cols.first().map_or(0, Vec::len);
    (0..m).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
}

/// Composite Simpson rule with `intervals` (rounded up to even) pieces.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = (intervals.max(2) + 1) / 2 * 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * k as f64);
    }
    s * h / 3.0
}

/// Simpson nodes and weights over the knot spans of `basis`.
#[derive(Debug, Clone)]
pub struct SimpsonRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SimpsonRule {
    pub fn new(basis: &BasisSpec, intervals_per_span: usize) -> Self {
        let n = (intervals_per_span.max(2) + 1) / 2 * 2;
        let breaks = basis.breakpoints();
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for span in breaks.windows(2) {
            let h = (span[1] - span[0]) / n as f64;
            for k in 0..=n {
                let w = if k == 0 || k == n {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                nodes.push(span[0] + h * k as f64);
                weights.push(w * h / 3.0);
            }
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&u, w)| w * f(u)).sum()
    }
}

/// Tabulated basis values at the Simpson nodes.
#[derive(Debug, Clone)]
struct NodeBasis {
    rule: SimpsonRule,
    rows: Vec<Vec<f64>>,
}

impl NodeBasis {
    fn new(basis: &BasisSpec, intervals_per_span: usize) -> Result<Self> {
        let rule = SimpsonRule::new(basis, intervals_per_span);
        let rows = rule.nodes.iter().map(|&u| basis.eval(u)).collect::<Result<Vec<_>>>()?;
        Ok(Self { rule, rows })
    }

    /// `∫ exp(θᵀβ)` and `∫ β exp(θᵀβ)`.
    fn exp_moments(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let mut e = 0.0;
        let mut s = vec![0.0; theta.len()];
        for (row, w) in self.rows.iter().zip(&self.rule.weights) {
            let v = w * dot(theta, row).exp();
            e += v;
            for (a, b) in s.iter_mut().zip(row) {
                *a += v * b;
            }
        }
        (e, s)
    }

    fn exp_integral(&self, theta: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.rule.weights)
            .map(|(row, w)| w * dot(theta, row).exp())
            .sum()
    }
}

/// Population model with seasonal means `θ₀j`, latent variance spline `τ₀`
/// and a residue-mode trend `η₀`.
#[derive(Debug, Clone)]
pub struct TrueModel {
    pub basis: BasisSpec,
    pub theta0: Vec<Vec<f64>>,
    pub tau0: Vec<f64>,
    pub eta0: Vec<f64>,
    pub trend: TrendSpec,
    pub indexer: SeasonIndexer,
    nodes: NodeBasis,
}

impl TrueModel {
    pub fn new(
        basis: BasisSpec,
        theta0: Vec<Vec<f64>>,
        tau0: Vec<f64>,
        eta0: Vec<f64>,
        r: usize,
        intervals_per_span: usize,
    ) -> Result<Self> {
        let d = theta0.len();
        let p = basis.dim();
        if d == 0 || theta0.iter().any(|t| t.len() != p) || tau0.len() != p {
            return Err(Error::Dimension {
                what: "true model coefficients",
                expected: p,
                found: tau0.len(),
            });
        }
        let trend = TrendSpec::residue(eta0.len(), r)?;
        let indexer = SeasonIndexer::new(d, Some(r))?;
        let nodes = NodeBasis::new(&basis, intervals_per_span)?;
        Ok(Self {
            basis,
            theta0,
            tau0,
            eta0,
            trend,
            indexer,
            nodes,
        })
    }

    /// Random model with coefficients uniform in `[−bound, bound]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, basis: BasisSpec, d: usize, r: usize, q: usize, bound: f64) -> Result<Self> {
        let p = basis.dim();
        let mut draw = |k: usize| (0..k).map(|_| rng.random_range(-bound..=bound)).collect::<Vec<_>>();
        let theta0 = (0..d).map(|_| draw(p)).collect();
        let tau0 = draw(p);
        let eta0 = draw(q);
        Self::new(basis, theta0, tau0, eta0, r, 200)
    }

    pub fn d(&self) -> usize {
        self.theta0.len()
    }

    pub fn r(&self) -> usize {
        self.indexer.r().unwrap_or(self.d())
    }

    /// `θ₀j + τ₀/2`.
    pub fn theta_star(&self) -> Vec<Vec<f64>> {
        self.theta0
            .iter()
            .map(|t| t.iter().zip(&self.tau0).map(|(a, b)| a + 0.5 * b).collect())
            .collect()
    }

    pub fn params_star(&self) -> Params {
        Params {
            theta: self.theta_star(),
            eta: self.eta0.clone(),
        }
    }

    /// `λ₀j(u) = exp(μ₀j(u) + v₀(u)/2)` for `j ∈ 1..=d`.
    pub fn lambda0(&self, j: usize, u: f64) -> Result<f64> {
        let beta = self.basis.eval(u)?;
        Ok((dot(&self.theta0[j - 1], &beta) + 0.5 * dot(&self.tau0, &beta)).exp())
    }

    fn cycle(&self) -> impl Iterator<Item = (usize, usize, Vec<f64>)> + '_ {
        let w = self.r() / self.d();
        (1..=w).flat_map(move |i| {
            (1..=self.d()).map(move |j| {
                let a = self.indexer.cycle_position(i, j);
                (j, a, self.trend.eval_at(a as f64))
            })
        })
    }

    fn check(&self, params: &Params) -> Result<()> {
        if params.d() != self.d() || params.p() != self.basis.dim() || params.q() != self.eta0.len() {
            return Err(Error::Dimension {
                what: "params",
                expected: self.d() * self.basis.dim() + self.eta0.len(),
                found: params.dim(),
            });
        }
        Ok(())
    }

    /// Population limit of the working objective, with `θ_jᵀσ_j` inside
    /// the trend-weighted average.
    pub fn rho0(&self, params: &Params) -> Result<f64> {
        self.check(params)?;
        let star = self.theta_star();
        let truth: Vec<(f64, Vec<f64>)> = star.iter().map(|t| self.nodes.exp_moments(t)).collect();
        let fitted: Vec<f64> = params.theta.iter().map(|t| self.nodes.exp_integral(t)).collect();
        let mut total = 0.0;
        for (j, _a, b) in self.cycle() {
            let (e0, s0) = &truth[j - 1];
            let c0 = dot(&self.eta0, &b).exp();
            let eb = dot(&params.eta, &b);
            total += -eb.exp() * fitted[j - 1] + c0 * (e0 * eb + dot(&params.theta[j - 1], s0));
        }
        Ok(total / self.r() as f64)
    }

    /// Alternative reading with `θ_jᵀσ_j` outside the trend weight.
    pub fn rho0_unweighted_linear(&self, params: &Params) -> Result<f64> {
        self.check(params)?;
        let star = self.theta_star();
        let truth: Vec<(f64, Vec<f64>)> = star.iter().map(|t| self.nodes.exp_moments(t)).collect();
        let fitted: Vec<f64> = params.theta.iter().map(|t| self.nodes.exp_integral(t)).collect();
        let mut total = 0.0;
        for (j, _a, b) in self.cycle() {
            let (e0, s0) = &truth[j - 1];
            let c0 = dot(&self.eta0, &b).exp();
            let eb = dot(&params.eta, &b);
            total += -eb.exp() * fitted[j - 1] + c0 * e0 * eb + dot(&params.theta[j - 1], s0);
        }
        Ok(total / self.r() as f64)
    }

    /// Analytic gradient of [`TrueModel::rho0`], ordered as [`Params::to_vec`].
    pub fn rho0_gradient(&self, params: &Params) -> Result<Vec<f64>> {
        self.gradient_impl(params, true)
    }

    /// Analytic gradient of [`TrueModel::rho0_unweighted_linear`].
    pub fn rho0_unweighted_linear_gradient(&self, params: &Params) -> Result<Vec<f64>> {
        self.gradient_impl(params, false)
    }

    fn gradient_impl(&self, params: &Params, weighted: bool) -> Result<Vec<f64>> {
        self.check(params)?;
        let (d, p, q) = (self.d(), self.basis.dim(), self.eta0.len());
        let star = self.theta_star();
        let truth: Vec<(f64, Vec<f64>)> = star.iter().map(|t| self.nodes.exp_moments(t)).collect();
        let fitted: Vec<(f64, Vec<f64>)> = params.theta.iter().map(|t| self.nodes.exp_moments(t)).collect();
        let mut g = vec![0.0; d * p + q];
        for (j, _a, b) in self.cycle() {
            let (e0, s0) = &truth[j - 1];
            let (e, s) = &fitted[j - 1];
            let c0 = dot(&self.eta0, &b).exp();
            let eb = dot(&params.eta, &b).exp();
            let lin = if weighted { c0 } else { 1.0 };
            for k in 0..p {
                g[(j - 1) * p + k] += -eb * s[k] + lin * s0[k];
            }
            for k in 0..q {
                g[d * p + k] += (-eb * e + c0 * e0) * b[k];
            }
        }
        let r = self.r() as f64;
        Ok(g.into_iter().map(|v| v / r).collect())
    }

    /// Working-model generator (`τ₀` must be zero for this to match the
    /// population model).
    pub fn generator(&self) -> CoxGenerator {
        CoxGenerator {
            basis: self.basis.clone(),
            theta: self.theta0.clone(),
            trend: self.trend,
            eta: self.eta0.clone(),
            latent: LatentProcess::None,
            zeta: vec![0.0; self.basis.dim()],
        }
    }
}

/// Working objective of a series evaluated with Simpson integrals.
pub struct SimpsonObjective {
    nodes: NodeBasis,
    d: usize,
    /// Per day: season index, trend covariates, count, event basis sum.
    days: Vec<(usize, Vec<f64>, f64, Vec<f64>)>,
}

impl SimpsonObjective {
    pub fn new(series: &PatternSeries, basis: &BasisSpec, intervals_per_span: usize) -> Result<Self> {
        let nodes = NodeBasis::new(basis, intervals_per_span)?;
        let p = basis.dim();
        let mut days = Vec::with_capacity(series.len());
        for t in 1..=series.len() {
            let pat = series.day(t);
            let mut s = vec![0.0; p];
            for &u in &pat.points {
                for (a, b) in s.iter_mut().zip(basis.eval(u)?) {
                    *a += b;
                }
            }
            days.push((series.indexer().season(t), series.trend().eval(t)?, pat.count() as f64, s));
        }
        Ok(Self {
            nodes,
            d: series.d(),
            days,
        })
    }

    pub fn value(&self, params: &Params) -> f64 {
        let ints: Vec<f64> = (0..self.d).map(|j| self.nodes.exp_integral(&params.theta[j])).collect();
        let total: f64 = self
            .days
            .iter()
            .map(|(j, b, m, s)| {
                let eb = dot(&params.eta, b);
                -eb.exp() * ints[j - 1] + m * eb + dot(&params.theta[j - 1], s)
            })
            .sum();
        total / self.days.len() as f64
    }
}

/// Maximizes `f` over the lattice with `resolution` points per coordinate
/// spanning each interval of `bounds` (endpoints included).
pub fn grid_maximize(f: impl Fn(&[f64]) -> f64, bounds: &[(f64, f64)], resolution: usize) -> Result<Vec<f64>> {
    if bounds.is_empty() || resolution < 2 {
        return Err(Error::InvalidInput("grid search needs a box and at least 2 points per axis".into()));
    }
    if bounds.iter().any(|(lo, hi)| !(lo <= hi)) {
        return Err(Error::InvalidInput("grid search box has an empty side".into()));
    }
    let points = (resolution as u128).checked_pow(bounds.len() as u32).unwrap_or(u128::MAX);
    if points > GRID_BUDGET {
        return Err(Error::GridBudget {
            points,
            limit: GRID_BUDGET,
        });
    }
    let coord = |axis: usize, k: usize| {
        let (lo, hi) = bounds[axis];
        lo + (hi - lo) * k as f64 / (resolution - 1) as f64
    };
    let mut idx = vec![0usize; bounds.len()];
    let mut x: Vec<f64> = (0..bounds.len()).map(|a| coord(a, 0)).collect();
    let mut best = x.clone();
    let mut best_val = f64::NEG_INFINITY;
    loop {
        let v = f(&x);
        if v > best_val {
            best_val = v;
            best.copy_from_slice(&x);
        }
        let mut axis = 0;
        loop {
            if axis == bounds.len() {
                return Ok(best);
            }
            idx[axis] += 1;
            if idx[axis] < resolution {
                x[axis] = coord(axis, idx[axis]);
                break;
            }
            idx[axis] = 0;
            x[axis] = coord(axis, 0);
            axis += 1;
        }
    }
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
}

impl McEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            mean,
            se: (var / n).sqrt(),
        }
    }

    /// `|mean − value| ≤ k·se`.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.se
    }
}

/// Monte Carlo estimate of `E Σ_j g(u_j)` for a Poisson process with
/// intensity `exp(coeffsᵀβ(u) + offset)`; sample `i` uses substream `i` of
/// `seed`.
pub fn mc_campbell(
    coeffs: &[f64],
    offset: f64,
    basis: &BasisSpec,
    g: impl Fn(f64) -> f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples == 0 {
        return Err(Error::InvalidInput("at least one sample is required".into()));
    }
    let mut sums = Vec::with_capacity(samples);
    for i in 0..samples {
        let pat = sample_pattern(coeffs, offset, basis, &mut substream(seed, i as u64))?;
        sums.push(pat.points.iter().map(|&u| g(u)).sum());
    }
    Ok(McEstimate::from_samples(&sums))
}
