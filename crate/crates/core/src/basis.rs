//! Spline and trend bases.
//!
//! The intensity side uses a clamped B-spline basis `β(u)` on a closed
//! interval, evaluated with the triangular Cox–de Boor scheme. The trend side
//! uses global monomials `b(t)`, either centered at the start of each trend
//! period (so `b(1) = 0`) or normalized to the unit interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 2]", try_from = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidDomain { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, u: f64) -> bool {
        u >= self.lo && u <= self.hi
    }

    fn check(&self, u: f64) -> Result<()> {
        if self.contains(u) {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                u,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(iv: Interval) -> Self {
        [iv.lo, iv.hi]
    }
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        Interval::new(v[0], v[1])
    }
}

const MAX_DEGREE: usize = 30;

/// Clamped B-spline basis on a closed interval.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    domain: Interval,
    degree: usize,
    knots: Vec<f64>,
}

impl BasisSpec {
    /// Clamped basis with `interior_knots` equally spaced interior knots.
    pub fn uniform(domain: Interval, degree: usize, interior_knots: usize) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::Config(format!("spline degree {degree} is too large")));
        }
        let h = domain.length() / (interior_knots + 1) as f64;
        let interior: Vec<f64> = (1..=interior_knots)
            .map(|i| domain.lo + h * i as f64)
            .collect();
        Ok(Self::clamped(domain, degree, &interior))
    }

    /// Clamped basis with explicit interior knot positions.
    pub fn with_interior_knots(domain: Interval, degree: usize, interior: &[f64]) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::Config(format!("spline degree {degree} is too large")));
        }
        if interior.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidKnots("interior knots must be nondecreasing".into()));
        }
        if interior.iter().any(|&k| !(k > domain.lo && k < domain.hi)) {
            return Err(Error::InvalidKnots(
                "interior knots must lie strictly inside the domain".into(),
            ));
        }
        // A knot repeated more than `degree` times would leave an empty
        // support for one basis function (or a discontinuous degree-0 basis).
        let mut run = 1;
        for w in interior.windows(2) {
            run = if w[0] == w[1] { run + 1 } else { 1 };
            if run > degree.max(1) {
                return Err(Error::InvalidKnots(format!(
                    "knot {} has multiplicity above the degree",
                    w[0]
                )));
            }
        }
        Ok(Self::clamped(domain, degree, interior))
    }

    fn clamped(domain: Interval, degree: usize, interior: &[f64]) -> Self {
        let mut knots = Vec::with_capacity(interior.len() + 2 * (degree + 1));
        knots.extend(std::iter::repeat_n(domain.lo, degree + 1));
        knots.extend_from_slice(interior);
        knots.extend(std::iter::repeat_n(domain.hi, degree + 1));
        Self {
            domain,
            degree,
            knots,
        }
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.knots[self.degree + 1..self.knots.len() - self.degree - 1]
    }

    /// Basis dimension `p = degree + 1 + #interior knots`.
    pub fn dim(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Distinct breakpoints `L = x_0 < x_1 < … < x_m = U`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::with_capacity(self.knots.len());
        for &k in &self.knots {
            if out.last().is_none_or(|&last| k > last) {
                out.push(k);
            }
        }
        out
    }

    /// Index `i` of the knot span with `knots[i] <= u < knots[i + 1]`; the
    /// last nonempty span is closed on the right.
    fn span(&self, u: f64) -> usize {
        let p = self.dim();
        if u >= self.knots[p] {
            return p - 1;
        }
        // knots[degree..=p] is nondecreasing; find the last index with knot <= u.
        let slice = &self.knots[self.degree..=p];
        let pos = slice.partition_point(|&k| k <= u);
        self.degree + pos - 1
    }

    /// Values of the `degree + 1` basis functions that may be nonzero at
    /// `u`, together with the index of the first of them. `out` must have
    /// length `degree + 1`. No domain check.
    pub(crate) fn eval_local(&self, u: f64, out: &mut [f64]) -> usize {
        let k = self.degree;
        let i = self.span(u);
        let t = &self.knots;
        out[0] = 1.0;
        let mut left = [0.0f64; 32];
        let mut right = [0.0f64; 32];
        for j in 1..=k {
            left[j] = u - t[i + 1 - j];
            right[j] = t[i + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
        i - k
    }

    /// Dense basis vector `β(u)` of length `p`.
    pub fn eval(&self, u: f64) -> Result<Vec<f64>> {
        self.domain.check(u)?;
        let mut dense = vec![0.0; self.dim()];
        self.eval_into(u, &mut dense);
        Ok(dense)
    }

    /// Writes `β(u)` into `dense` (length `p`) without checking the domain.
    pub(crate) fn eval_into(&self, u: f64, dense: &mut [f64]) {
        let mut local = vec![0.0; self.degree + 1];
        let start = self.eval_local(u, &mut local);
        dense.fill(0.0);
        dense[start..start + local.len()].copy_from_slice(&local);
    }

    /// `coeffsᵀβ(u)`.
    pub fn eval_spline(&self, coeffs: &[f64], u: f64) -> Result<f64> {
        self.domain.check(u)?;
        if coeffs.len() != self.dim() {
            return Err(Error::Dimension {
                what: "spline coefficients",
                expected: self.dim(),
                found: coeffs.len(),
            });
        }
        Ok(self.eval_spline_unchecked(coeffs, u))
    }

    pub(crate) fn eval_spline_unchecked(&self, coeffs: &[f64], u: f64) -> f64 {
        let mut local = [0.0f64; 32];
        let local = &mut local[..=self.degree];
        let start = self.eval_local(u, local);
        local
            .iter()
            .zip(&coeffs[start..])
            .map(|(b, c)| b * c)
            .sum()
    }
}

/// Clamped B-spline basis of the given degree with equally spaced interior
/// knots.
pub fn make_bspline_basis(domain: Interval, degree: usize, interior_knots: usize) -> Result<BasisSpec> {
    BasisSpec::uniform(domain, degree, interior_knots)
}

/// Upper bound for `sup_u coeffsᵀβ(u)`.
///
/// B-spline values are nonnegative and sum to one, so every value of the
/// expansion is a convex combination of the coefficients.
pub fn spline_sup_bound(spec: &BasisSpec, coeffs: &[f64]) -> Result<f64> {
    if coeffs.len() != spec.dim() {
        return Err(Error::Dimension {
            what: "spline coefficients",
            expected: spec.dim(),
            found: coeffs.len(),
        });
    }
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("spline coefficients must be finite".into()));
    }
    Ok(coeffs.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// How the trend covariates `b(t)` are built from the day index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum TrendMode {
    /// `b(t) = ((s−1), …, (s−1)^q)` with `s = {t}_r`; guarantees `b(1) = 0`.
    Residue { r: usize },
    /// `b(t) = (s, …, s^q)` with `s = t/(n+1)`.
    Normalized { n: usize },
}

/// Monomial trend basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendSpec {
    pub q: usize,
    #[serde(flatten)]
    pub mode: TrendMode,
}

impl TrendSpec {
    pub fn residue(q: usize, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::Config("trend period r must be at least 1".into()));
        }
        Ok(Self {
            q,
            mode: TrendMode::Residue { r },
        })
    }

    pub fn normalized(q: usize, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("series length n must be at least 1".into()));
        }
        Ok(Self {
            q,
            mode: TrendMode::Normalized { n },
        })
    }

    /// Argument of `c̃` for day `t`: the residue `{t}_r` or `t/(n+1)`.
    pub fn argument(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Err(Error::InvalidTimeIndex(t));
        }
        Ok(match self.mode {
            TrendMode::Residue { r } => trend_residue(t, r) as f64,
            TrendMode::Normalized { n } => t as f64 / (n + 1) as f64,
        })
    }

    /// `b(t)` for day index `t ≥ 1`.
    pub fn eval(&self, t: usize) -> Result<Vec<f64>> {
        Ok(self.eval_at(self.argument(t)?))
    }

    /// Monomials at a continuous argument of `c̃` (residue value in `[1, r]`
    /// or normalized time in `[0, 1]`).
    pub fn eval_at(&self, x: f64) -> Vec<f64> {
        let base = match self.mode {
            TrendMode::Residue { .. } => x - 1.0,
            TrendMode::Normalized { .. } => x,
        };
        let mut out = Vec::with_capacity(self.q);
        let mut pow = 1.0;
        for _ in 0..self.q {
            pow *= base;
            out.push(pow);
        }
        out
    }

    /// Largest magnitude each covariate reaches over one period, floored at 1.
    pub fn column_scales(&self) -> Vec<f64> {
        let top = match self.mode {
            TrendMode::Residue { r } => (r as f64 - 1.0).max(1.0),
            TrendMode::Normalized { .. } => 1.0,
        };
        (1..=self.q).map(|k| top.powi(k as i32).max(1.0)).collect()
    }
}

/// Residue `{t}_m`: the remainder of `t / m`, with `m` in place of zero.
#[inline]
pub fn residue(t: usize, m: usize) -> usize {
    debug_assert!(t >= 1 && m >= 1);
    (t - 1) % m + 1
}

/// Season `j(t) = {t}_d ∈ 1..=d`.
#[inline]
pub fn seasonal_index(t: usize, d: usize) -> usize {
    residue(t, d)
}

/// Trend position `{t}_r ∈ 1..=r`.
#[inline]
pub fn trend_residue(t: usize, r: usize) -> usize {
    residue(t, r)
}

/// Seasonal period `d` and, optionally, the trend period `r = w·d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonIndexer {
    d: usize,
    r: Option<usize>,
}

impl SeasonIndexer {
    pub fn new(d: usize, r: Option<usize>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config("seasonal period d must be at least 1".into()));
        }
        if let Some(r) = r {
            if r == 0 || r % d != 0 {
                return Err(Error::Config(format!(
                    "trend period r = {r} must be a positive multiple of d = {d}"
                )));
            }
        }
        Ok(Self { d, r })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn r(&self) -> Option<usize> {
        self.r
    }

    /// Number of seasonal cycles per trend period.
    pub fn w(&self) -> Option<usize> {
        self.r.map(|r| r / self.d)
    }

    pub fn season(&self, t: usize) -> usize {
        seasonal_index(t, self.d)
    }

    /// `a_ij = (i−1)d + j`.
    pub fn cycle_position(&self, i: usize, j: usize) -> usize {
        (i - 1) * self.d + j
    }
}
