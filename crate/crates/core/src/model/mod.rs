//! Working-likelihood estimation of trend and seasonal intensities.
//!
//! Days are modeled as independent Poisson processes with intensity
//! `exp(ηᵀb(t) + θ_{j(t)}ᵀβ(u))`. The resulting objective is concave in
//! `(θ_1, …, θ_d, η)` and is maximized by damped Newton iterations.

mod fit;
mod likelihood;

pub use fit::{fit, fit_from, fit_trend_only, FitConfig, FitResult};
pub use likelihood::{hessian, objective, score, WorkingLikelihood};

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::basis::{BasisSpec, Interval, SeasonIndexer, TrendMode, TrendSpec};
use crate::error::{Error, Result};

/// Event locations observed during one period.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointPattern {
    pub points: Vec<f64>,
}

impl PointPattern {
    pub fn new(points: Vec<f64>) -> Self {
        Self { points }
    }

    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `n` consecutive patterns together with their seasonal and trend indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSeries {
    patterns: Vec<PointPattern>,
    domain: Interval,
    indexer: SeasonIndexer,
    trend: TrendSpec,
}

impl PatternSeries {
    pub fn new(
        patterns: Vec<PointPattern>,
        domain: Interval,
        indexer: SeasonIndexer,
        trend: TrendSpec,
    ) -> Result<Self> {
        if patterns.is_empty() {
            return Err(Error::InvalidInput("a series needs at least one pattern".into()));
        }
        for (t, pat) in patterns.iter().enumerate() {
            if let Some(&u) = pat.points.iter().find(|&&u| !domain.contains(u)) {
                return Err(Error::InvalidInput(format!(
                    "day {}: point {u} outside [{}, {}]",
                    t + 1,
                    domain.lo,
                    domain.hi
                )));
            }
        }
        if let TrendMode::Residue { r } = trend.mode {
            if r % indexer.d() != 0 {
                return Err(Error::Config(format!(
                    "trend period r = {r} must be a multiple of the seasonal period d = {}",
                    indexer.d()
                )));
            }
        }
        Ok(Self {
            patterns,
            domain,
            indexer,
            trend,
        })
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn patterns(&self) -> &[PointPattern] {
        &self.patterns
    }

    /// Pattern for day `t` (1-based).
    pub fn day(&self, t: usize) -> &PointPattern {
        &self.patterns[t - 1]
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn indexer(&self) -> SeasonIndexer {
        self.indexer
    }

    pub fn trend(&self) -> TrendSpec {
        self.trend
    }

    pub fn d(&self) -> usize {
        self.indexer.d()
    }

    pub fn total_events(&self) -> usize {
        self.patterns.iter().map(PointPattern::count).sum()
    }

    /// Appends a day, keeping the indexing.
    pub fn push(&mut self, pattern: PointPattern) -> Result<()> {
        if let Some(&u) = pattern.points.iter().find(|&&u| !self.domain.contains(u)) {
            return Err(Error::InvalidInput(format!("point {u} outside the domain")));
        }
        self.patterns.push(pattern);
        Ok(())
    }
}

/// Spline coefficients per season and trend coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub theta: Vec<Vec<f64>>,
    pub eta: Vec<f64>,
}

impl Params {
    pub fn zeros(d: usize, p: usize, q: usize) -> Self {
        Self {
            theta: vec![vec![0.0; p]; d],
            eta: vec![0.0; q],
        }
    }

    pub fn d(&self) -> usize {
        self.theta.len()
    }

    pub fn p(&self) -> usize {
        self.theta.first().map_or(0, Vec::len)
    }

    pub fn q(&self) -> usize {
        self.eta.len()
    }

    pub fn dim(&self) -> usize {
        self.d() * self.p() + self.q()
    }

    /// Stacked `(θ_1, …, θ_d, η)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        for row in &self.theta {
            v.extend_from_slice(row);
        }
        v.extend_from_slice(&self.eta);
        v
    }

    pub fn from_slice(x: &[f64], d: usize, p: usize, q: usize) -> Result<Self> {
        if x.len() != d * p + q {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected: d * p + q,
                found: x.len(),
            });
        }
        Ok(Self {
            theta: x[..d * p].chunks(p.max(1)).take(d).map(<[f64]>::to_vec).collect(),
            eta: x[d * p..].to_vec(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().flatten().chain(&self.eta).all(|x| x.is_finite())
    }
}

/// Mean spline `μ = (1/d)Σθ_j` and seasonal deviations `s_j = θ_j − μ`.
pub fn decompose(params: &Params) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = params.d();
    let p = params.p();
    let mut mu = vec![0.0; p];
    for row in &params.theta {
        for (m, x) in mu.iter_mut().zip(row) {
            *m += x;
        }
    }
    mu.iter_mut().for_each(|m| *m /= d as f64);
    let seasonal = params
        .theta
        .iter()
        .map(|row| row.iter().zip(&mu).map(|(x, m)| x - m).collect())
        .collect();
    (mu, seasonal)
}

/// Log density of a Poisson pattern:
/// `−∫λ − log(m!) + Σ log λ(u_k)`.
pub fn log_poisson_density(
    pattern: &PointPattern,
    log_intensity: impl Fn(f64) -> f64,
    intensity_integral: f64,
) -> Result<f64> {
    if !(intensity_integral >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "intensity integral must be nonnegative, got {intensity_integral}"
        )));
    }
    let m = pattern.count();
    let sum: f64 = pattern.points.iter().map(|&u| log_intensity(u)).sum();
    Ok(-intensity_integral - ln_factorial(m as u64) + sum)
}

/// Evaluators for the fitted seasonal intensities and trend.
#[derive(Debug, Clone)]
pub struct Predictor {
    basis: BasisSpec,
    trend: TrendSpec,
    params: Params,
}

impl Predictor {
    /// `λ̂_j(u) = exp(θ̂_jᵀβ(u))` for season `j ∈ 1..=d`.
    pub fn intensity(&self, j: usize, u: f64) -> Result<f64> {
        Ok(self.log_intensity(j, u)?.exp())
    }

    pub fn log_intensity(&self, j: usize, u: f64) -> Result<f64> {
        let row = self.season_row(j)?;
        self.basis.eval_spline(row, u)
    }

    fn season_row(&self, j: usize) -> Result<&[f64]> {
        if j == 0 || j > self.params.d() {
            return Err(Error::InvalidInput(format!(
                "season {j} outside 1..={}",
                self.params.d()
            )));
        }
        Ok(&self.params.theta[j - 1])
    }

    /// `ĉ(t) = η̂ᵀb(t)` for day `t`.
    pub fn trend(&self, t: usize) -> Result<f64> {
        Ok(dot(&self.params.eta, &self.trend.eval(t)?))
    }

    /// `c̃(x)` at a continuous trend argument.
    pub fn trend_at(&self, x: f64) -> f64 {
        dot(&self.params.eta, &self.trend.eval_at(x))
    }

    pub fn seasons(&self) -> usize {
        self.params.d()
    }
}

/// Evaluators `λ̂_j` and `ĉ` for a converged fit.
pub fn predict(fit: &FitResult, basis: &BasisSpec, trend: &TrendSpec) -> Result<Predictor> {
    if !fit.converged {
        return Err(Error::NotConverged("predictions"));
    }
    if fit.params.p() != basis.dim() || fit.params.q() != trend.q {
        return Err(Error::Dimension {
            what: "fit parameters vs basis",
            expected: basis.dim() + trend.q,
            found: fit.params.p() + fit.params.q(),
        });
    }
    Ok(Predictor {
        basis: basis.clone(),
        trend: *trend,
        params: fit.params.clone(),
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
