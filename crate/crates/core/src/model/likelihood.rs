use nalgebra::{DMatrix, DVector};

use super::{dot, Params, PatternSeries};
use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::quadrature::{BasisTable, Moments, QuadGrid};

/// Sufficient statistics of a series for the working likelihood.
///
/// Each day contributes only through its season, its trend covariates
/// `b(t)`, its count `m_t` and the basis sum `Σ_k β(u_tk)`, so all
/// evaluations are `O(n(p + q)²)` after the per-season moments are formed.
#[derive(Debug, Clone)]
pub struct WorkingLikelihood {
    table: BasisTable,
    d: usize,
    q: usize,
    season: Vec<usize>,
    b: Vec<Vec<f64>>,
    m: Vec<f64>,
    event_sums: Vec<DVector<f64>>,
    season_events: Vec<usize>,
    season_days: Vec<usize>,
}

impl WorkingLikelihood {
    pub fn new(series: &PatternSeries, basis: &BasisSpec, grid: &QuadGrid) -> Result<Self> {
        if basis.domain() != series.domain() {
            return Err(Error::Config("basis and series domains differ".into()));
        }
        let table = BasisTable::new(basis, grid)?;
        let p = basis.dim();
        let d = series.d();
        let trend = series.trend();
        let n = series.len();
        let mut season = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut m = Vec::with_capacity(n);
        let mut event_sums = Vec::with_capacity(n);
        let mut season_events = vec![0; d];
        let mut season_days = vec![0; d];
        let mut local = vec![0.0; basis.degree() + 1];
        for (idx, pat) in series.patterns().iter().enumerate() {
            let t = idx + 1;
            let j = series.indexer().season(t) - 1;
            season.push(j);
            b.push(trend.eval(t)?);
            m.push(pat.count() as f64);
            let mut s = DVector::zeros(p);
            for &u in &pat.points {
                let start = basis.eval_local(u, &mut local);
                for (k, v) in local.iter().enumerate() {
                    s[start + k] += v;
                }
            }
            event_sums.push(s);
            season_events[j] += pat.count();
            season_days[j] += 1;
        }
        Ok(Self {
            table,
            d,
            q: trend.q,
            season,
            b,
            m,
            event_sums,
            season_events,
            season_days,
        })
    }

    pub fn n(&self) -> usize {
        self.season.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.table.dim()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.d * self.p() + self.q
    }

    pub fn table(&self) -> &BasisTable {
        &self.table
    }

    /// Events observed in each season.
    pub fn season_events(&self) -> &[usize] {
        &self.season_events
    }

    /// Days observed in each season.
    pub fn season_days(&self) -> &[usize] {
        &self.season_days
    }

    /// Zero-based season of day index `idx` (day `t = idx + 1`).
    pub fn season_of(&self, idx: usize) -> usize {
        self.season[idx]
    }

    pub fn trend_covariates(&self, idx: usize) -> &[f64] {
        &self.b[idx]
    }

    pub fn count(&self, idx: usize) -> f64 {
        self.m[idx]
    }

    pub fn event_sum(&self, idx: usize) -> &DVector<f64> {
        &self.event_sums[idx]
    }

    fn check(&self, params: &Params) -> Result<()> {
        let ok = params.theta.len() == self.d
            && params.theta.iter().all(|r| r.len() == self.p())
            && params.eta.len() == self.q;
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension {
                what: "parameters",
                expected: self.dim(),
                found: params.dim(),
            })
        }
    }

    /// Per-season moments of `exp(θ_jᵀβ)`.
    pub fn season_moments(&self, params: &Params) -> Vec<Moments> {
        params.theta.iter().map(|th| self.table.moments(th)).collect()
    }

    fn trend_factor(&self, params: &Params, idx: usize) -> f64 {
        dot(&params.eta, &self.b[idx]).exp()
    }

    /// `ρ_n(θ_1, …, θ_d, η)`.
    pub fn objective(&self, params: &Params) -> Result<f64> {
        self.check(params)?;
        let e: Vec<f64> = params.theta.iter().map(|th| self.table.integral_exp(th)).collect();
        let mut total = 0.0;
        for idx in 0..self.n() {
            let j = self.season[idx];
            let lin = dot(&params.eta, &self.b[idx]);
            let theta_s: f64 = params.theta[j]
                .iter()
                .zip(self.event_sums[idx].iter())
                .map(|(a, b)| a * b)
                .sum();
            total += -lin.exp() * e[j] + self.m[idx] * lin + theta_s;
        }
        Ok(total / self.n() as f64)
    }

    /// `ρ_n(to) − ρ_n(from)`, evaluated without cancellation so that the
    /// sign is reliable even when the change is far below the rounding
    /// error of the objective itself.
    pub fn objective_change(&self, from: &Params, to: &Params) -> Result<f64> {
        self.check(from)?;
        self.check(to)?;
        let mut base = Vec::with_capacity(self.d);
        let mut diff = Vec::with_capacity(self.d);
        for (a, b) in from.theta.iter().zip(&to.theta) {
            let step: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
            let now = self.table.spline_at_nodes(a);
            let delta = self.table.spline_at_nodes(&step);
            let w = self.table.grid().weights();
            let mut i0 = 0.0;
            let mut di = 0.0;
            for g in 0..w.len() {
                let e = w[g] * now[g].exp();
                i0 += e;
                di += e * delta[g].exp_m1();
            }
            base.push(i0);
            diff.push((step, di));
        }
        let deta: Vec<f64> = to.eta.iter().zip(&from.eta).map(|(x, y)| x - y).collect();
        let mut total = 0.0;
        for idx in 0..self.n() {
            let j = self.season[idx];
            let b = &self.b[idx];
            let db = dot(&deta, b);
            let f = dot(&from.eta, b).exp();
            let (step, di) = &diff[j];
            let mass = f * (db.exp() * di + db.exp_m1() * base[j]);
            let lin: f64 = step.iter().zip(self.event_sums[idx].iter()).map(|(a, b)| a * b).sum();
            total += -mass + self.m[idx] * db + lin;
        }
        Ok(total / self.n() as f64)
    }

    /// Per-day score `ψ_t` (without the `1/n` factor).
    pub fn day_score(&self, params: &Params, moments: &[Moments], idx: usize) -> DVector<f64> {
        let p = self.p();
        let j = self.season[idx];
        let f = self.trend_factor(params, idx);
        let mut psi = DVector::zeros(self.dim());
        let mut block = psi.rows_mut(j * p, p);
        block.copy_from(&self.event_sums[idx]);
        block.axpy(-f, &moments[j].sigma, 1.0);
        let resid = self.m[idx] - f * moments[j].e;
        for (k, bk) in self.b[idx].iter().enumerate() {
            psi[self.d * p + k] = bk * resid;
        }
        psi
    }

    /// All per-day scores at `params`.
    pub fn day_scores(&self, params: &Params) -> Result<Vec<DVector<f64>>> {
        self.check(params)?;
        let moments = self.season_moments(params);
        Ok((0..self.n())
            .map(|idx| self.day_score(params, &moments, idx))
            .collect())
    }

    /// Gradient of the objective.
    pub fn score(&self, params: &Params) -> Result<DVector<f64>> {
        self.check(params)?;
        let moments = self.season_moments(params);
        Ok(self.score_with(params, &moments))
    }

    fn score_with(&self, params: &Params, moments: &[Moments]) -> DVector<f64> {
        let p = self.p();
        let mut g = DVector::zeros(self.dim());
        for idx in 0..self.n() {
            let j = self.season[idx];
            let f = self.trend_factor(params, idx);
            {
                let mut block = g.rows_mut(j * p, p);
                block += &self.event_sums[idx];
                block.axpy(-f, &moments[j].sigma, 1.0);
            }
            let resid = self.m[idx] - f * moments[j].e;
            for (k, bk) in self.b[idx].iter().enumerate() {
                g[self.d * p + k] += bk * resid;
            }
        }
        g / self.n() as f64
    }

    /// Hessian of the objective.
    pub fn hessian(&self, params: &Params) -> Result<DMatrix<f64>> {
        self.check(params)?;
        let moments = self.season_moments(params);
        Ok(self.hessian_with(params, &moments))
    }

    fn hessian_with(&self, params: &Params, moments: &[Moments]) -> DMatrix<f64> {
        let p = self.p();
        let dp = self.d * p;
        let dim = self.dim();
        // Accumulate trend-weighted sums per season, then form the blocks.
        let mut wsum = vec![0.0; self.d];
        let mut wb = vec![DVector::<f64>::zeros(self.q); self.d];
        let mut wbb = DMatrix::<f64>::zeros(self.q, self.q);
        for idx in 0..self.n() {
            let j = self.season[idx];
            let f = self.trend_factor(params, idx);
            wsum[j] += f;
            let b = DVector::from_column_slice(&self.b[idx]);
            wb[j].axpy(f, &b, 1.0);
            wbb.ger(f * moments[j].e, &b, &b, 1.0);
        }
        let mut h = DMatrix::zeros(dim, dim);
        for j in 0..self.d {
            h.view_mut((j * p, j * p), (p, p))
                .copy_from(&(&moments[j].sigma_mat * -wsum[j]));
            let cross = &moments[j].sigma * wb[j].transpose() * -1.0;
            h.view_mut((j * p, dp), (p, self.q)).copy_from(&cross);
            h.view_mut((dp, j * p), (self.q, p)).copy_from(&cross.transpose());
        }
        h.view_mut((dp, dp), (self.q, self.q)).copy_from(&(-wbb));
        h / self.n() as f64
    }

    /// Objective, gradient and Hessian from a single set of moments.
    pub fn evaluate(&self, params: &Params) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        let value = self.objective(params)?;
        let moments = self.season_moments(params);
        Ok((
            value,
            self.score_with(params, &moments),
            self.hessian_with(params, &moments),
        ))
    }
}

/// `ρ_n` at `params`.
pub fn objective(series: &PatternSeries, params: &Params, grid: &QuadGrid, basis: &BasisSpec) -> Result<f64> {
    WorkingLikelihood::new(series, basis, grid)?.objective(params)
}

/// Gradient of `ρ_n`: `(1/n)Σ_t ψ_t`.
pub fn score(series: &PatternSeries, params: &Params, grid: &QuadGrid, basis: &BasisSpec) -> Result<DVector<f64>> {
    WorkingLikelihood::new(series, basis, grid)?.score(params)
}

/// Analytic Hessian of `ρ_n`.
pub fn hessian(series: &PatternSeries, params: &Params, grid: &QuadGrid, basis: &BasisSpec) -> Result<DMatrix<f64>> {
    WorkingLikelihood::new(series, basis, grid)?.hessian(params)
}
