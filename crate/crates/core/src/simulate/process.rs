use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};

use super::rng::{derive_seed, stream, substream};
use crate::basis::{spline_sup_bound, BasisSpec, SeasonIndexer, TrendMode, TrendSpec};
use crate::error::{Error, Result};
use crate::model::{dot, PatternSeries, PointPattern};
use crate::quadrature::BasisTable;

/// `Z_1 = ε_1` (or a stationary draw), `Z_t = aZ_{t−1} + ε_t`,
/// `ε_t ~ N(0, σ_ε²)`.
pub fn ar1_path<R: Rng + ?Sized>(n: usize, a: f64, sigma_eps: f64, stationary_start: bool, rng: &mut R) -> Result<Vec<f64>> {
    if !(a.abs() < 1.0) {
        return Err(Error::Config(format!("AR coefficient must satisfy |a| < 1, got {a}")));
    }
    if !(sigma_eps > 0.0) {
        return Err(Error::Config(format!("innovation sd must be positive, got {sigma_eps}")));
    }
    let eps = Normal::new(0.0, sigma_eps).map_err(|e| Error::Config(e.to_string()))?;
    let mut path = Vec::with_capacity(n);
    let mut z = 0.0;
    for t in 0..n {
        let e = eps.sample(rng);
        z = if t == 0 {
            if stationary_start {
                e / (1.0 - a * a).sqrt()
            } else {
                e
            }
        } else {
            a * z + e
        };
        path.push(z);
    }
    Ok(path)
}

/// `θ₀ / ‖θ₀ᵀβ‖_{L²}`, using the Gram matrix on the table's grid.
pub fn normalize_zeta(theta0: &[f64], table: &BasisTable) -> Result<Vec<f64>> {
    if theta0.len() != table.dim() {
        return Err(Error::Dimension {
            what: "theta0",
            expected: table.dim(),
            found: theta0.len(),
        });
    }
    let t = nalgebra::DVector::from_column_slice(theta0);
    let norm2 = (t.transpose() * table.gram() * &t)[(0, 0)];
    if !(norm2 > 0.0) {
        return Err(Error::InvalidInput("cannot normalize a zero mean function".into()));
    }
    let norm = norm2.sqrt();
    Ok(theta0.iter().map(|x| x / norm).collect())
}

/// Diagnostics from one thinning draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThinningStats {
    pub proposals: usize,
    pub accepted: usize,
    /// Largest `Λ(u)/M` over the proposals.
    pub max_ratio: f64,
}

/// Exact draw from the Poisson process with intensity
/// `exp(coeffsᵀβ(u) + offset)` by thinning a homogeneous process at rate
/// `exp(max coeff + offset)`.
pub fn sample_pattern<R: Rng + ?Sized>(coeffs: &[f64], offset: f64, basis: &BasisSpec, rng: &mut R) -> Result<PointPattern> {
    Ok(sample_pattern_with_stats(coeffs, offset, basis, rng)?.0)
}

pub fn sample_pattern_with_stats<R: Rng + ?Sized>(
    coeffs: &[f64],
    offset: f64,
    basis: &BasisSpec,
    rng: &mut R,
) -> Result<(PointPattern, ThinningStats)> {
    if !offset.is_finite() {
        return Err(Error::InvalidInput("log-intensity offset must be finite".into()));
    }
    let log_bound = spline_sup_bound(basis, coeffs)? + offset;
    let dom = basis.domain();
    let rate = log_bound.exp() * dom.length();
    let proposals = if rate > 0.0 {
        let pois = Poisson::new(rate).map_err(|e| Error::InvalidInput(e.to_string()))?;
        pois.sample(rng) as usize
    } else {
        0
    };
    let mut points = Vec::new();
    let mut max_ratio: f64 = 0.0;
    for _ in 0..proposals {
        let u = dom.lo + dom.length() * rng.random::<f64>();
        let ratio = (basis.eval_spline_unchecked(coeffs, u) + offset - log_bound).exp();
        debug_assert!(ratio <= 1.0 + 1e-12, "thinning ratio {ratio} exceeds 1");
        max_ratio = max_ratio.max(ratio);
        if rng.random::<f64>() < ratio {
            points.push(u);
        }
    }
    points.sort_by(f64::total_cmp);
    let accepted = points.len();
    Ok((
        PointPattern::new(points),
        ThinningStats {
            proposals,
            accepted,
            max_ratio,
        },
    ))
}

/// Gaussian latent factor `Z_t` multiplying the direction `ζ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatentProcess {
    /// `Y_t = 0`.
    None,
    /// `Z_t ~ N(0, σ²)` independently.
    Independent { sigma: f64 },
    /// AR(1) with innovation sd `σ_ε`.
    Ar1 { a: f64, sigma_eps: f64, stationary_start: bool },
}

impl LatentProcess {
    pub fn path<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        match *self {
            LatentProcess::None => Ok(vec![0.0; n]),
            LatentProcess::Independent { sigma } => {
                if !(sigma >= 0.0) {
                    return Err(Error::Config("latent sd must be nonnegative".into()));
                }
                Ok((0..n)
                    .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect())
            }
            LatentProcess::Ar1 {
                a,
                sigma_eps,
                stationary_start,
            } => ar1_path(n, a, sigma_eps, stationary_start, rng),
        }
    }

    /// Marginal variance of `Z_t` in the stationary regime.
    pub fn stationary_variance(&self) -> f64 {
        match *self {
            LatentProcess::None => 0.0,
            LatentProcess::Independent { sigma } => sigma * sigma,
            LatentProcess::Ar1 { a, sigma_eps, .. } => sigma_eps * sigma_eps / (1.0 - a * a),
        }
    }
}

/// Log-Gaussian Cox generator:
/// `log Λ_t(u) = θ_{j(t)}ᵀβ(u) + Z_tζᵀβ(u) + ηᵀb(t)`.
#[derive(Debug, Clone)]
pub struct CoxGenerator {
    pub basis: BasisSpec,
    pub theta: Vec<Vec<f64>>,
    pub trend: TrendSpec,
    pub eta: Vec<f64>,
    pub latent: LatentProcess,
    pub zeta: Vec<f64>,
}

impl CoxGenerator {
    pub fn d(&self) -> usize {
        self.theta.len()
    }

    /// Spline coefficients and scalar offset of `log Λ_t` given `Z_t = z`.
    pub fn realize_log_intensity(&self, t: usize, z: f64) -> Result<(Vec<f64>, f64)> {
        let j = crate::basis::seasonal_index(t, self.d()) - 1;
        let z = if matches!(self.latent, LatentProcess::None) { 0.0 } else { z };
        let coeffs = self.theta[j]
            .iter()
            .zip(&self.zeta)
            .map(|(th, ze)| th + z * ze)
            .collect();
        let offset = dot(&self.eta, &self.trend.eval(t)?);
        Ok((coeffs, offset))
    }

    /// Simulates `n` days. The latent path uses substream 0 of `seed`, day
    /// `t` uses substream `t`.
    pub fn simulate(&self, n: usize, seed: u64) -> Result<PatternSeries> {
        let z = self.latent.path(n, &mut substream(seed, 0))?;
        let mut patterns = Vec::with_capacity(n);
        for t in 1..=n {
            let (coeffs, offset) = self.realize_log_intensity(t, z[t - 1])?;
            let mut rng = stream(derive_seed(seed, t as u64));
            patterns.push(sample_pattern(&coeffs, offset, &self.basis, &mut rng)?);
        }
        let r = match self.trend.mode {
            TrendMode::Residue { r } => Some(r),
            TrendMode::Normalized { .. } => None,
        };
        let indexer = SeasonIndexer::new(self.d(), r)?;
        PatternSeries::new(patterns, self.basis.domain(), indexer, self.trend)
    }
}
