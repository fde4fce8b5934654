use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::likelihood::WorkingLikelihood;
use super::{decompose, Params, PatternSeries};
use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::quadrature::QuadGrid;

/// Newton solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Sup-norm tolerance on the (trend-rescaled) gradient.
    pub tol: f64,
    pub max_iter: usize,
    /// Ridge weight applied to the coefficients of seasons without events.
    pub ridge: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            ridge: 1e-6,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tol)));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::Config(format!("ridge must be nonnegative, got {}", self.ridge)));
        }
        Ok(())
    }
}

/// Outcome of maximizing the working likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Params,
    pub mu: Vec<f64>,
    pub seasonal: Vec<Vec<f64>>,
    /// Unpenalized objective at `params`.
    pub objective_value: f64,
    /// Sup-norm of the gradient after rescaling each trend coordinate by the
    /// largest magnitude of its covariate.
    pub gradient_norm: f64,
    /// Sup-norm of the raw gradient.
    pub raw_gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective (including any ridge term) after each accepted step,
    /// starting with the initial value. Later entries accumulate the exactly
    /// evaluated changes, so the sequence is nondecreasing.
    pub trace: Vec<f64>,
    pub warnings: Vec<String>,
    /// Number of days in the fitted series.
    pub n: usize,
}

/// Maximizes the working likelihood from zero parameters.
pub fn fit(series: &PatternSeries, basis: &BasisSpec, grid: &QuadGrid, config: &FitConfig) -> Result<FitResult> {
    let init = Params::zeros(series.d(), basis.dim(), series.trend().q);
    fit_from(series, basis, grid, config, init)
}

/// Single-season (trend-only) fit; identical to [`fit`] with `d = 1`.
pub fn fit_trend_only(series: &PatternSeries, basis: &BasisSpec, grid: &QuadGrid, config: &FitConfig) -> Result<FitResult> {
    if series.d() != 1 {
        return Err(Error::Config(format!(
            "trend-only fit requires d = 1, series has d = {}",
            series.d()
        )));
    }
    fit(series, basis, grid, config)
}

/// Maximizes the working likelihood starting at `init`.
pub fn fit_from(
    series: &PatternSeries,
    basis: &BasisSpec,
    grid: &QuadGrid,
    config: &FitConfig,
    init: Params,
) -> Result<FitResult> {
    config.validate()?;
    let lik = WorkingLikelihood::new(series, basis, grid)?;
    let (d, p, q) = (lik.d(), lik.p(), lik.q());
    if init.d() != d || init.p() != p || init.q() != q {
        return Err(Error::Dimension {
            what: "initial parameters",
            expected: lik.dim(),
            found: init.dim(),
        });
    }

    let mut warnings = Vec::new();
    // Diagonal ridge on the coordinates with no information in the data.
    let mut ridge = DVector::zeros(lik.dim());
    for (j, &events) in lik.season_events().iter().enumerate() {
        if events == 0 {
            let msg = format!(
                "season {} has no events; its coefficients are unbounded and a ridge of {:e} is applied",
                j + 1,
                config.ridge
            );
            log::warn!("{msg}");
            warnings.push(msg);
            ridge.rows_mut(j * p, p).fill(config.ridge);
        }
    }
    if series.total_events() == 0 && q > 0 {
        warnings.push("series has no events; trend coefficients are ridge-stabilized".into());
        ridge.rows_mut(d * p, q).fill(config.ridge);
    }

    // Newton is affine invariant, but the raw residue-mode covariates span
    // many orders of magnitude; iterate in rescaled coordinates.
    let mut scale = DVector::from_element(lik.dim(), 1.0);
    for (k, s) in series.trend().column_scales().into_iter().enumerate() {
        scale[d * p + k] = s;
    }

    let penalized = |x: &DVector<f64>, params: &Params| -> Result<f64> {
        let pen: f64 = x.iter().zip(ridge.iter()).map(|(v, r)| r * v * v).sum();
        Ok(lik.objective(params)? - 0.5 * pen)
    };

    let mut x = DVector::from_vec(init.to_vec());
    let mut params = init;
    let mut value = penalized(&x, &params)?;
    if !value.is_finite() {
        return Err(Error::InvalidInput("objective is not finite at the initial parameters".into()));
    }
    let mut trace = vec![value];
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm;
    let mut raw_norm;

    loop {
        let (_, g_raw, h_raw) = lik.evaluate(&params)?;
        let g = &g_raw - ridge.component_mul(&x);
        let mut h = h_raw;
        for i in 0..lik.dim() {
            h[(i, i)] -= ridge[i];
        }
        let gs = g.component_div(&scale);
        grad_norm = gs.amax();
        raw_norm = g.amax();
        if grad_norm <= config.tol {
            converged = true;
            break;
        }
        if iterations >= config.max_iter {
            break;
        }
        iterations += 1;

        // Solve (−H̃) δ̃ = g̃ in rescaled coordinates.
        let mut neg_h = -h;
        for i in 0..lik.dim() {
            for k in 0..lik.dim() {
                neg_h[(i, k)] /= scale[i] * scale[k];
            }
        }
        let step_scaled = solve_positive(neg_h, &gs)?;
        let step = step_scaled.component_div(&scale);

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &x + &step * alpha;
            let trial_params = Params::from_slice(trial.as_slice(), d, p, q)?;
            let pen_change: f64 = (0..lik.dim())
                .map(|i| -0.5 * ridge[i] * (trial[i] - x[i]) * (trial[i] + x[i]))
                .sum();
            let change = lik.objective_change(&params, &trial_params)? + pen_change;
            if change.is_finite() && change >= 0.0 {
                x = trial;
                params = trial_params;
                value += change;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            let msg = format!("line search stalled at iteration {iterations}");
            log::debug!("{msg}");
            warnings.push(msg);
            let (_, g_raw, _) = lik.evaluate(&params)?;
            let g = &g_raw - ridge.component_mul(&x);
            grad_norm = g.component_div(&scale).amax();
            raw_norm = g.amax();
            converged = grad_norm <= config.tol;
            break;
        }
        trace.push(value);
    }

    if !converged {
        log::warn!("Newton iterations did not converge (gradient norm {grad_norm:.3e})");
    }
    let (mu, seasonal) = decompose(&params);
    Ok(FitResult {
        objective_value: lik.objective(&params)?,
        params,
        mu,
        seasonal,
        gradient_norm: grad_norm,
        raw_gradient_norm: raw_norm,
        iterations,
        converged,
        trace,
        warnings,
        n: lik.n(),
    })
}

/// Solves `A x = b` for symmetric positive (semi)definite `A`, adding a
/// growing multiple of the identity when the Cholesky factorization fails.
fn solve_positive(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    let diag_max = a.diagonal().amax().max(1e-300);
    let mut shift = diag_max * 1e-12;
    for _ in 0..40 {
        let mut shifted = a.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += shift;
        }
        if let Some(ch) = shifted.cholesky() {
            return Ok(ch.solve(b));
        }
        shift *= 10.0;
    }
    Err(Error::SingularInformation {
        block: "Newton system".into(),
        rcond: 0.0,
    })
}
