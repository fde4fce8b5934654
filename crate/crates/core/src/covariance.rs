//! Sandwich covariance `Ω = W⁻¹VW⁻¹` and pointwise confidence bands.
//!
//! `W` is estimated by plugging the fitted intensities and trend into the
//! block formulas, `V` by the mean outer product of per-day scores. The
//! population versions of both, for a known rank-one latent kernel, are
//! available through [`theoretical_vw`] and serve as test oracles.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::basis::{BasisSpec, SeasonIndexer, TrendMode, TrendSpec};
use crate::error::{Error, Result};
use crate::model::{dot, FitResult, Params, PatternSeries, WorkingLikelihood};
use crate::quadrature::{BasisTable, Moments, QuadGrid};

/// Reciprocal condition number below which `W` is treated as singular.
pub const RCOND_THRESHOLD: f64 = 1e-12;

/// Per-season averages of the trend factor over the days of that season.
///
/// For season `j`, with `c_i` the trend values and `b_i` the covariates of
/// its days: `ẽ_j = avg e^{c_i}`, `ẽ_jj = avg e^{2c_i}`,
/// `σ̃_j = avg e^{c_i} b_i`, `σ̃_jj = avg e^{2c_i} b_i`,
/// `Σ̃_j = avg e^{c_i} b_i b_iᵀ`, `Σ̃_jj = avg e^{2c_i} b_i b_iᵀ`.
/// `weight[j]` is the share of days falling in season `j` (`1/d` over
/// complete cycles).
#[derive(Debug, Clone, PartialEq)]
pub struct TrendAverages {
    pub weight: Vec<f64>,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub s1: Vec<DVector<f64>>,
    pub s2: Vec<DVector<f64>>,
    pub m1: Vec<DMatrix<f64>>,
    pub m2: Vec<DMatrix<f64>>,
}

impl TrendAverages {
    fn from_groups(q: usize, groups: &[Vec<Vec<f64>>], eta: &[f64], total: usize) -> Self {
        let d = groups.len();
        let mut out = Self {
            weight: vec![0.0; d],
            e1: vec![0.0; d],
            e2: vec![0.0; d],
            s1: vec![DVector::zeros(q); d],
            s2: vec![DVector::zeros(q); d],
            m1: vec![DMatrix::zeros(q, q); d],
            m2: vec![DMatrix::zeros(q, q); d],
        };
        for (j, days) in groups.iter().enumerate() {
            if days.is_empty() {
                continue;
            }
            let k = days.len() as f64;
            out.weight[j] = k / total as f64;
            for b in days {
                let f = dot(eta, b).exp();
                let f2 = f * f;
                let bv = DVector::from_column_slice(b);
                out.e1[j] += f / k;
                out.e2[j] += f2 / k;
                out.s1[j].axpy(f / k, &bv, 1.0);
                out.s2[j].axpy(f2 / k, &bv, 1.0);
                out.m1[j].ger(f / k, &bv, &bv, 1.0);
                out.m2[j].ger(f2 / k, &bv, &bv, 1.0);
            }
        }
        out
    }

    /// Averages over the sampled days `t = 1..=n`.
    pub fn over_days(trend: &TrendSpec, eta: &[f64], d: usize, n: usize) -> Result<Self> {
        let mut groups = vec![Vec::new(); d];
        for t in 1..=n {
            groups[crate::basis::seasonal_index(t, d) - 1].push(trend.eval(t)?);
        }
        Ok(Self::from_groups(trend.q, &groups, eta, n))
    }

    /// Averages over one complete trend period, `a_ij = (i−1)d + j` for
    /// `i = 1..=w`.
    pub fn over_cycle(trend: &TrendSpec, eta: &[f64], indexer: &SeasonIndexer) -> Result<Self> {
        let r = match (trend.mode, indexer.r()) {
            (TrendMode::Residue { r }, Some(ri)) if r == ri => r,
            _ => {
                return Err(Error::Config(
                    "cycle averages need a residue trend whose period matches the indexer".into(),
                ))
            }
        };
        let d = indexer.d();
        let w = r / d;
        let groups: Vec<Vec<Vec<f64>>> = (1..=d)
            .map(|j| {
                (1..=w)
                    .map(|i| trend.eval_at(indexer.cycle_position(i, j) as f64))
                    .collect()
            })
            .collect();
        Ok(Self::from_groups(trend.q, &groups, eta, r))
    }
}

/// Latent covariance `γ₀(u,u′) = σ²ζ(u)ζ(u′)` with `‖ζ‖_{L²} = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneKernel {
    zeta: Vec<f64>,
    variance: f64,
}

impl RankOneKernel {
    pub fn new(zeta: Vec<f64>, variance: f64, table: &BasisTable) -> Result<Self> {
        if zeta.len() != table.dim() {
            return Err(Error::Dimension {
                what: "zeta coefficients",
                expected: table.dim(),
                found: zeta.len(),
            });
        }
        let z = DVector::from_column_slice(&zeta);
        let norm = (z.transpose() * table.gram() * &z)[(0, 0)].sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidInput(format!("zeta must have unit L2 norm, has {norm}")));
        }
        if !(variance >= 0.0) {
            return Err(Error::InvalidInput("kernel variance must be nonnegative".into()));
        }
        Ok(Self { zeta, variance })
    }

    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }
}

/// `V`, `W`, `Ω` with their block layout `(θ_1, …, θ_d, η)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichParts {
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub d: usize,
    pub p: usize,
    pub q: usize,
}

impl SandwichParts {
    pub fn new(v: DMatrix<f64>, w: DMatrix<f64>, d: usize, p: usize, q: usize) -> Result<Self> {
        let omega = sandwich_with_layout(&v, &w, Some((d, p, q)))?;
        Ok(Self { v, w, omega, d, p, q })
    }

    /// Offset of block `k` (0-based; `k = d` is the trend block).
    pub fn block_offset(&self, k: usize) -> usize {
        k * self.p
    }

    pub fn blocks(&self) -> OmegaBlocks {
        OmegaBlocks::from_matrix(&self.omega, self.d, self.p, self.q)
    }
}

/// Diagonal blocks of `Ω`: one `p×p` block per season and the `q×q` trend
/// block. This is all the pointwise bands need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaBlocks {
    pub theta: Vec<Vec<Vec<f64>>>,
    pub eta: Vec<Vec<f64>>,
}

impl OmegaBlocks {
    pub fn from_matrix(omega: &DMatrix<f64>, d: usize, p: usize, q: usize) -> Self {
        let rows = |m: nalgebra::DMatrixView<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
        };
        Self {
            theta: (0..d).map(|j| rows(omega.view((j * p, j * p), (p, p)))).collect(),
            eta: rows(omega.view((d * p, d * p), (q, q))),
        }
    }

    pub fn zeros(d: usize, p: usize, q: usize) -> Self {
        Self {
            theta: vec![vec![vec![0.0; p]; p]; d],
            eta: vec![vec![0.0; q]; q],
        }
    }

    fn quad_form(m: &[Vec<f64>], x: &[f64]) -> f64 {
        m.iter()
            .zip(x)
            .map(|(row, xi)| xi * dot(row, x))
            .sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let sc = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            m.iter().map(|r| r.iter().map(|x| x * factor).collect()).collect()
        };
        Self {
            theta: self.theta.iter().map(sc).collect(),
            eta: sc(&self.eta),
        }
    }
}

fn check_converged(fit: &FitResult, what: &'static str) -> Result<()> {
    if fit.converged {
        Ok(())
    } else {
        Err(Error::NotConverged(what))
    }
}

fn assemble_w(moments: &[Moments], avg: &TrendAverages, p: usize, q: usize) -> DMatrix<f64> {
    let d = moments.len();
    let dp = d * p;
    let mut w = DMatrix::zeros(dp + q, dp + q);
    for (j, m) in moments.iter().enumerate() {
        let pi = avg.weight[j];
        w.view_mut((j * p, j * p), (p, p))
            .copy_from(&(&m.sigma_mat * (-pi * avg.e1[j])));
        let cross = &m.sigma * avg.s1[j].transpose() * -pi;
        w.view_mut((j * p, dp), (p, q)).copy_from(&cross);
        w.view_mut((dp, j * p), (q, p)).copy_from(&cross.transpose());
        let mut tt = w.view_mut((dp, dp), (q, q));
        tt -= &avg.m1[j] * (pi * m.e);
    }
    w
}

/// Plug-in estimate of `W` at a converged fit.
///
/// The trend averages run over the sampled days, so with a residue trend
/// and `n` a multiple of `r` this reproduces the complete-cycle formulas.
pub fn plug_in_w(fit: &FitResult, series: &PatternSeries, basis: &BasisSpec, grid: &QuadGrid) -> Result<DMatrix<f64>> {
    check_converged(fit, "the plug-in W")?;
    let table = BasisTable::new(basis, grid)?;
    let moments: Vec<Moments> = fit.params.theta.iter().map(|th| table.moments(th)).collect();
    let avg = TrendAverages::over_days(&series.trend(), &fit.params.eta, series.d(), series.len())?;
    Ok(assemble_w(&moments, &avg, basis.dim(), series.trend().q))
}

/// `V̂ = (1/n)Σ_t ψ_tψ_tᵀ` at the fitted parameters.
pub fn empirical_v(series: &PatternSeries, fit: &FitResult, basis: &BasisSpec, grid: &QuadGrid) -> Result<DMatrix<f64>> {
    check_converged(fit, "the empirical V")?;
    let lik = WorkingLikelihood::new(series, basis, grid)?;
    outer_product_mean(&lik, &fit.params)
}

pub(crate) fn outer_product_mean(lik: &WorkingLikelihood, params: &Params) -> Result<DMatrix<f64>> {
    let dim = lik.dim();
    let mut v = DMatrix::zeros(dim, dim);
    for psi in lik.day_scores(params)? {
        v.ger(1.0, &psi, &psi, 1.0);
    }
    Ok(v / lik.n() as f64)
}

/// `Ω = W⁻¹VW⁻¹`, symmetrized.
pub fn sandwich(v: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    sandwich_with_layout(v, w, None)
}

fn sandwich_with_layout(v: &DMatrix<f64>, w: &DMatrix<f64>, layout: Option<(usize, usize, usize)>) -> Result<DMatrix<f64>> {
    let n = w.nrows();
    if w.ncols() != n || v.nrows() != n || v.ncols() != n {
        return Err(Error::Dimension {
            what: "sandwich matrices",
            expected: n,
            found: v.nrows(),
        });
    }
    // Equilibrate −W so that badly scaled trend covariates do not register
    // as ill-conditioning.
    let neg_w = -w;
    let mut scale = DVector::zeros(n);
    for i in 0..n {
        let dii = neg_w[(i, i)];
        if !(dii > 0.0) {
            return Err(singular_block(&neg_w, layout, i, 0.0));
        }
        scale[i] = 1.0 / dii.sqrt();
    }
    let mut a = neg_w.clone();
    for i in 0..n {
        for k in 0..n {
            a[(i, k)] *= scale[i] * scale[k];
        }
    }
    let a = (&a + a.transpose()) * 0.5;
    let eig = a.clone().symmetric_eigen();
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    let rcond = if max > 0.0 { min / max } else { 0.0 };
    if !(rcond > RCOND_THRESHOLD) {
        let worst = eig.eigenvalues.imin();
        let col = eig.eigenvectors.column(worst).iamax();
        return Err(singular_block(&neg_w, layout, col, rcond));
    }
    let chol = a.cholesky().ok_or_else(|| singular_block(&neg_w, layout, 0, rcond))?;
    // W⁻¹ = −D A⁻¹ D
    let a_inv = chol.inverse();
    let d = DMatrix::from_diagonal(&scale);
    let w_inv = -(&d * a_inv * &d);
    let omega = &w_inv * v * &w_inv;
    Ok((&omega + omega.transpose()) * 0.5)
}

fn singular_block(_neg_w: &DMatrix<f64>, layout: Option<(usize, usize, usize)>, index: usize, rcond: f64) -> Error {
    let block = match layout {
        Some((d, p, _)) if index < d * p => format!("theta_{}", index / p + 1),
        Some(_) => "eta".to_string(),
        None => format!("row {index}"),
    };
    Error::SingularInformation { block, rcond }
}

/// Empirical `V`, plug-in `W` and their sandwich at a converged fit.
pub fn estimate_sandwich(fit: &FitResult, series: &PatternSeries, basis: &BasisSpec, grid: &QuadGrid) -> Result<SandwichParts> {
    let v = empirical_v(series, fit, basis, grid)?;
    let w = plug_in_w(fit, series, basis, grid)?;
    SandwichParts::new(v, w, series.d(), basis.dim(), series.trend().q)
}

/// Population parameters of a log-Gaussian model: mean coefficients per
/// season `θ₀j` and the variance coefficients `τ₀` with `v₀ = τ₀ᵀβ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTruth {
    pub theta0: Vec<Vec<f64>>,
    pub tau0: Vec<f64>,
}

impl LatentTruth {
    /// `θ*₀j = θ₀j + τ₀/2`.
    pub fn theta_star(&self) -> Vec<Vec<f64>> {
        self.theta0
            .iter()
            .map(|row| row.iter().zip(&self.tau0).map(|(a, t)| a + 0.5 * t).collect())
            .collect()
    }
}

/// Population `V` and `W` for a rank-one (or zero) latent kernel.
///
/// `λ₀j = exp(μ₀j + v₀/2)`; the double integrals `e_jj`, `σ_jj`, `Σ_jj` run
/// over the tensor product of the quadrature grid and are accumulated already
/// centred, e.g. `Σ_jj − σ_jσ_jᵀ` directly.
pub fn theoretical_vw(
    truth: &LatentTruth,
    kernel: Option<&RankOneKernel>,
    avg: &TrendAverages,
    table: &BasisTable,
    q: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = table.dim();
    let d = truth.theta0.len();
    if truth.tau0.len() != p || truth.theta0.iter().any(|r| r.len() != p) {
        return Err(Error::Dimension {
            what: "true coefficients",
            expected: p,
            found: truth.tau0.len(),
        });
    }
    if avg.weight.len() != d {
        return Err(Error::Dimension {
            what: "trend averages",
            expected: d,
            found: avg.weight.len(),
        });
    }
    let grid = table.grid();
    let g = grid.len();
    let wq = grid.weights();
    let rows: Vec<DVector<f64>> = (0..g).map(|k| DVector::from_vec(table.dense_row(k))).collect();
    let zeta_nodes = kernel.map(|k| table.spline_at_nodes(k.zeta()));
    let var = kernel.map_or(0.0, RankOneKernel::variance);

    let stars = truth.theta_star();
    let mut moments = Vec::with_capacity(d);
    let dp = d * p;
    let mut v = DMatrix::zeros(dp + q, dp + q);
    for (j, star) in stars.iter().enumerate() {
        let lam: Vec<f64> = table.spline_at_nodes(star).iter().map(|s| s.exp()).collect();
        let m = table.weighted_moments(&lam);
        // Centred double integrals with the kernel excess `exp(γ₀) − 1`, which
        // vanishes identically without a latent field.
        let mut e_c = 0.0;
        let mut sigma_c = DVector::zeros(p);
        let mut big_c = DMatrix::zeros(p, p);
        if let Some(z) = &zeta_nodes {
            for a in 0..g {
                let mut inner = 0.0;
                let mut inner_vec = DVector::zeros(p);
                for b in 0..g {
                    let wgt = wq[b] * lam[b] * (var * z[a] * z[b]).exp_m1();
                    inner += wgt;
                    inner_vec.axpy(wgt, &rows[b], 1.0);
                }
                let outer = wq[a] * lam[a];
                e_c += outer * inner;
                sigma_c.axpy(outer * inner, &rows[a], 1.0);
                big_c.ger(outer, &rows[a], &inner_vec, 1.0);
            }
            big_c = (&big_c + big_c.transpose()) * 0.5;
        }

        let pi = avg.weight[j];
        let vjj = &big_c * avg.e2[j] + &m.sigma_mat * avg.e1[j];
        v.view_mut((j * p, j * p), (p, p)).copy_from(&(vjj * pi));
        let vj_eta = (&sigma_c * avg.s2[j].transpose() + &m.sigma * avg.s1[j].transpose()) * pi;
        v.view_mut((j * p, dp), (p, q)).copy_from(&vj_eta);
        v.view_mut((dp, j * p), (q, p)).copy_from(&vj_eta.transpose());
        let mut tt = v.view_mut((dp, dp), (q, q));
        tt += (&avg.m2[j] * e_c + &avg.m1[j] * m.e) * pi;
        moments.push(m);
    }
    let w = assemble_w(&moments, avg, p, q);
    Ok((v, w))
}

/// Standard normal quantile `z_{α/2}` for a two-sided level `1 − α`.
pub fn normal_multiplier(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let z = Normal::new(0.0, 1.0).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(z.inverse_cdf(1.0 - alpha / 2.0))
}

/// Trend band at covariates `b`: `ĉ ± z·sqrt(bᵀΩ_ηηb / n)`.
pub fn band_trend_at(fit: &FitResult, omega: &OmegaBlocks, b: &[f64], alpha: f64) -> Result<(f64, f64)> {
    let z = normal_multiplier(alpha)?;
    if b.len() != fit.params.q() || omega.eta.len() != b.len() {
        return Err(Error::Dimension {
            what: "trend covariates",
            expected: fit.params.q(),
            found: b.len(),
        });
    }
    let est = dot(&fit.params.eta, b);
    let var = OmegaBlocks::quad_form(&omega.eta, b).max(0.0) / fit.n as f64;
    let half = z * var.sqrt();
    Ok((est - half, est + half))
}

/// Trend band for day `t`.
pub fn band_trend(fit: &FitResult, omega: &OmegaBlocks, trend: &TrendSpec, t: usize, alpha: f64) -> Result<(f64, f64)> {
    band_trend_at(fit, omega, &trend.eval(t)?, alpha)
}

/// Variance factor used by the intensity band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityVariance {
    /// `λ̂²βᵀΩβ/n`, the delta method for `exp`.
    #[default]
    DeltaMethod,
    /// `λ̂βᵀΩβ/n`, a single intensity factor.
    SingleFactor,
}

/// Pointwise band for `λ_j(u)`, `j ∈ 1..=d`.
pub fn band_intensity(
    fit: &FitResult,
    omega: &OmegaBlocks,
    basis: &BasisSpec,
    j: usize,
    u: f64,
    alpha: f64,
    variance: IntensityVariance,
) -> Result<(f64, f64)> {
    let z = normal_multiplier(alpha)?;
    if j == 0 || j > fit.params.d() || j > omega.theta.len() {
        return Err(Error::InvalidInput(format!("season {j} outside 1..={}", fit.params.d())));
    }
    let beta = basis.eval(u)?;
    let lam = dot(&fit.params.theta[j - 1], &beta).exp();
    let quad = OmegaBlocks::quad_form(&omega.theta[j - 1], &beta).max(0.0);
    let factor = match variance {
        IntensityVariance::DeltaMethod => lam * lam,
        IntensityVariance::SingleFactor => lam,
    };
    let half = z * (factor * quad / fit.n as f64).sqrt();
    Ok((lam - half, lam + half))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{make_bspline_basis, Interval};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn identity_sandwich() {
        let i = DMatrix::<f64>::identity(4, 4);
        let o = sandwich(&i, &(-&i)).unwrap();
        assert_relative_eq!(o, i, epsilon = 1e-14);
    }

    #[test]
    fn information_equality_gives_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = random_spd(&mut rng, 5);
        let o = sandwich(&v, &(-&v)).unwrap();
        let inv = v.clone().try_inverse().unwrap();
        assert_relative_eq!(o, inv, max_relative = 1e-9, epsilon = 1e-10);
    }

    #[test]
    fn sandwich_is_symmetric_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let v = random_spd(&mut rng, 6);
            let w = -random_spd(&mut rng, 6);
            let o = sandwich(&v, &w).unwrap();
            assert_eq!(o, o.transpose());
            assert!(o.clone().symmetric_eigen().eigenvalues.min() > -1e-10);
            let w_inv = w.clone().try_inverse().unwrap();
            let direct = &w_inv * &v * &w_inv;
            assert_relative_eq!(o, direct, max_relative = 1e-8, epsilon = 1e-10);
        }
    }

    #[test]
    fn singular_w_names_block() {
        let v = DMatrix::<f64>::identity(3, 3);
        let mut w = -DMatrix::<f64>::identity(3, 3);
        w[(2, 2)] = 0.0;
        match sandwich_with_layout(&v, &w, Some((1, 2, 1))) {
            Err(Error::SingularInformation { block, .. }) => assert_eq!(block, "eta"),
            other => panic!("unexpected {other:?}"),
        }
        // Rank deficiency hidden off the diagonal.
        let w = -DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(sandwich(&v, &w), Err(Error::SingularInformation { .. })));
    }

    #[test]
    fn multiplier_matches_quantile() {
        assert!((normal_multiplier(0.05).unwrap() - 1.959964).abs() < 1e-5);
        assert!(normal_multiplier(0.0).is_err());
        assert!(normal_multiplier(1.0).is_err());
    }

    #[test]
    fn zero_kernel_gives_information_equality() {
        let dom = Interval::new(0.0, 24.0).unwrap();
        let basis = make_bspline_basis(dom, 3, 2).unwrap();
        let grid = QuadGrid::for_basis(&basis, 10).unwrap();
        let table = BasisTable::new(&basis, &grid).unwrap();
        let trend = TrendSpec::residue(2, 6).unwrap();
        let ix = SeasonIndexer::new(2, Some(6)).unwrap();
        let eta = [0.3, -0.05];
        let avg = TrendAverages::over_cycle(&trend, &eta, &ix).unwrap();
        let truth = LatentTruth {
            theta0: vec![vec![-2.0, -1.0, 0.5, -0.2, -1.0, -2.0], vec![-1.0, 0.0, -0.5, 0.2, -1.5, -1.0]],
            tau0: vec![0.2, 0.1, 0.0, 0.1, 0.0, 0.3],
        };
        let (v, w) = theoretical_vw(&truth, None, &avg, &table, 2).unwrap();
        assert!((&v + &w).amax() < 1e-10);
    }

    #[test]
    fn cycle_and_day_averages_agree_on_complete_cycles() {
        let trend = TrendSpec::residue(3, 12).unwrap();
        let ix = SeasonIndexer::new(3, Some(12)).unwrap();
        let eta = [0.1, -0.02, 0.001];
        let cyc = TrendAverages::over_cycle(&trend, &eta, &ix).unwrap();
        let days = TrendAverages::over_days(&trend, &eta, 3, 36).unwrap();
        for j in 0..3 {
            assert_relative_eq!(cyc.weight[j], 1.0 / 3.0, epsilon = 1e-15);
            assert_relative_eq!(cyc.weight[j], days.weight[j], epsilon = 1e-15);
            assert_relative_eq!(cyc.e1[j], days.e1[j], max_relative = 1e-13);
            assert_relative_eq!(cyc.m2[j], days.m2[j], max_relative = 1e-13);
            assert!(cyc.e2[j] >= cyc.e1[j] * cyc.e1[j]);
        }
    }

    #[test]
    fn kernel_norm_is_validated() {
        let dom = Interval::new(0.0, 24.0).unwrap();
        let basis = make_bspline_basis(dom, 0, 3).unwrap();
        let grid = QuadGrid::for_basis(&basis, 4).unwrap();
        let table = BasisTable::new(&basis, &grid).unwrap();
        assert!(RankOneKernel::new(vec![1.0; 4], 1.0, &table).is_err());
        let c = 1.0 / 24f64.sqrt();
        assert!(RankOneKernel::new(vec![c; 4], 1.0, &table).is_ok());
    }
}
