use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::process::{normalize_zeta, CoxGenerator, LatentProcess};
use super::rng::derive_seed;
use crate::basis::{make_bspline_basis, BasisSpec, Interval, TrendSpec};
use crate::covariance::{estimate_sandwich, OmegaBlocks};
use crate::error::{Error, Result};
use crate::model::{fit_trend_only, FitConfig, FitResult, PatternSeries};
use crate::quadrature::{BasisTable, QuadGrid, DEFAULT_NODES_PER_PANEL};

/// Mean function coefficients of the simulation design (cubic splines on
/// `[0, 24]` with knots at 8 and 16).
pub const THETA0: [f64; 6] = [-5.45, -4.96, -0.13, -4.14, -1.15, -5.52];
/// Spline coefficients of `v₀ = σ²ζ²` used for the latent scenarios.
pub const TAU0: [f64; 6] = [0.508, 0.331, -0.113, 0.270, -0.056, 0.459];
/// Quadratic drift coefficients in normalized time.
pub const ETA0: [f64; 2] = [9.38, -8.43];
pub const SIGMA: f64 = 2.0;
pub const AR_COEF: f64 = 0.7;

/// Latent structure of a simulation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// No latent term; the working model is correct.
    Working,
    /// `Z_t` iid `N(0, σ²)`.
    Independent,
    /// `Z_t` AR(1) with stationary variance `σ²`.
    Ar1,
}

impl Scenario {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "i" => Ok(Scenario::Working),
            "ii" => Ok(Scenario::Independent),
            "iii" => Ok(Scenario::Ar1),
            other => Err(Error::Config(format!("unknown scenario {other:?}; expected i, ii or iii"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Working => "i",
            Scenario::Independent => "ii",
            Scenario::Ar1 => "iii",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimModel {
    pub basis: BasisSpec,
    pub theta0: Vec<f64>,
    /// Normalized-mode trend; its `n` matches the series length.
    pub trend: TrendSpec,
    pub eta0: Vec<f64>,
    pub scenario: Scenario,
    pub sigma: f64,
    pub a: f64,
    pub sigma_eps: f64,
    pub zeta: Vec<f64>,
    /// Spline coefficients of `v₀`; zero for the working scenario.
    pub tau0: Vec<f64>,
    pub stationary_start: bool,
    pub nodes_per_panel: usize,
    pub n: usize,
    pub seed: u64,
}

impl SimModel {
    /// Scenario preset `"i"`, `"ii"` or `"iii"` with `n` days.
    pub fn preset(name: &str, n: usize, seed: u64) -> Result<Self> {
        let scenario = Scenario::from_name(name)?;
        if n < 1 {
            return Err(Error::Config("series length must be at least 1".into()));
        }
        let domain = Interval::new(0.0, 24.0)?;
        let basis = make_bspline_basis(domain, 3, 2)?;
        let grid = QuadGrid::for_basis(&basis, DEFAULT_NODES_PER_PANEL)?;
        let table = BasisTable::new(&basis, &grid)?;
        let zeta = normalize_zeta(&THETA0, &table)?;
        let tau0 = match scenario {
            Scenario::Working => vec![0.0; 6],
            _ => TAU0.to_vec(),
        };
        let model = Self {
            basis,
            theta0: THETA0.to_vec(),
            trend: TrendSpec::normalized(2, n)?,
            eta0: ETA0.to_vec(),
            scenario,
            sigma: SIGMA,
            a: if scenario == Scenario::Ar1 { AR_COEF } else { 0.0 },
            sigma_eps: match scenario {
                Scenario::Ar1 => SIGMA * (1.0 - AR_COEF * AR_COEF).sqrt(),
                _ => SIGMA,
            },
            zeta,
            tau0,
            stationary_start: false,
            nodes_per_panel: DEFAULT_NODES_PER_PANEL,
            n,
            seed,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.basis.dim();
        for (what, v) in [("theta0", &self.theta0), ("zeta", &self.zeta), ("tau0", &self.tau0)] {
            if v.len() != p {
                return Err(Error::Dimension {
                    what,
                    expected: p,
                    found: v.len(),
                });
            }
        }
        if self.eta0.len() != self.trend.q {
            return Err(Error::Dimension {
                what: "eta0",
                expected: self.trend.q,
                found: self.eta0.len(),
            });
        }
        if !matches!(self.trend.mode, crate::basis::TrendMode::Normalized { n } if n == self.n) {
            return Err(Error::Config("simulation trend must be normalized with the series length".into()));
        }
        if self.scenario == Scenario::Ar1 {
            if !(self.a.abs() < 1.0) {
                return Err(Error::Config(format!("AR coefficient must satisfy |a| < 1, got {}", self.a)));
            }
            let implied = self.sigma * self.sigma * (1.0 - self.a * self.a);
            if (self.sigma_eps * self.sigma_eps - implied).abs() > 1e-10 {
                return Err(Error::Config("sigma_eps² must equal sigma²(1 − a²)".into()));
            }
        }
        let table = self.table()?;
        let g = table.gram();
        let z = DVector::from_column_slice(&self.zeta);
        let norm = (z.transpose() * g * &z)[(0, 0)].sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::Config(format!("zeta must have unit L² norm, has {norm}")));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<QuadGrid> {
        QuadGrid::for_basis(&self.basis, self.nodes_per_panel)
    }

    pub fn table(&self) -> Result<BasisTable> {
        BasisTable::new(&self.basis, &self.grid()?)
    }

    pub fn latent(&self) -> LatentProcess {
        match self.scenario {
            Scenario::Working => LatentProcess::None,
            Scenario::Independent => LatentProcess::Independent { sigma: self.sigma },
            Scenario::Ar1 => LatentProcess::Ar1 {
                a: self.a,
                sigma_eps: self.sigma_eps,
                stationary_start: self.stationary_start,
            },
        }
    }

    pub fn generator(&self) -> CoxGenerator {
        CoxGenerator {
            basis: self.basis.clone(),
            theta: vec![self.theta0.clone()],
            trend: self.trend,
            eta: self.eta0.clone(),
            latent: self.latent(),
            zeta: self.zeta.clone(),
        }
    }

    /// `θ₀ + τ₀/2`, the limit of the working-likelihood estimator.
    pub fn theta_star(&self) -> Vec<f64> {
        self.theta0
            .iter()
            .zip(&self.tau0)
            .map(|(t, v)| t + 0.5 * v)
            .collect()
    }

    /// Series for replicate `rep`.
    pub fn simulate_replicate(&self, rep: u64) -> Result<PatternSeries> {
        self.generator().simulate(self.n, derive_seed(self.seed, rep))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Theta,
    Eta,
    Intensity,
    Trend,
}

impl Target {
    pub fn name(&self) -> &'static str {
        match self {
            Target::Theta => "theta",
            Target::Eta => "eta",
            Target::Intensity => "intensity",
            Target::Trend => "trend",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub target: Target,
    pub bias: f64,
    pub sd: f64,
    pub rmse: f64,
}

/// Bias, sd and rmse of the estimators over the converged replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub scenario: String,
    pub n: usize,
    pub replications: usize,
    pub excluded: usize,
    pub rows: Vec<ErrorRow>,
}

impl ErrorSummary {
    pub fn row(&self, target: Target) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.target == target)
    }
}

/// Per-replicate output.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub index: usize,
    pub converged: bool,
    pub fit: FitResult,
    /// Sandwich blocks; `None` when the information matrix is singular.
    pub omega: Option<OmegaBlocks>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutcome {
    pub summary: ErrorSummary,
    pub records: Vec<ReplicateRecord>,
}

impl StudyOutcome {
    /// Average of `θ̂` over converged replicates.
    pub fn mean_theta(&self) -> Vec<f64> {
        mean_of(self.converged().map(|r| r.fit.params.theta[0].as_slice()))
    }

    pub fn mean_eta(&self) -> Vec<f64> {
        mean_of(self.converged().map(|r| r.fit.params.eta.as_slice()))
    }

    pub fn converged(&self) -> impl Iterator<Item = &ReplicateRecord> {
        self.records.iter().filter(|r| r.converged)
    }
}

fn mean_of<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for row in rows {
        if acc.is_empty() {
            acc = vec![0.0; row.len()];
        }
        for (a, x) in acc.iter_mut().zip(row) {
            *a += x;
        }
        count += 1;
    }
    acc.iter().map(|a| a / count.max(1) as f64).collect()
}

/// Gram matrix of the monomials `x, …, x^q` in `L²([0, 1])`.
pub fn monomial_gram(q: usize) -> DMatrix<f64> {
    DMatrix::from_fn(q, q, |i, j| 1.0 / (i + j + 3) as f64)
}

/// Bias, sd and rmse of `samples` around `target` in the norm
/// `‖x‖² = xᵀMx`. The sd divides by the number of samples so that
/// `rmse² = bias² + sd²`.
pub fn error_row(target: Target, samples: &[DVector<f64>], truth: &DVector<f64>, metric: &DMatrix<f64>) -> ErrorRow {
    let r = samples.len() as f64;
    let mut mean = DVector::zeros(truth.len());
    for s in samples {
        mean += s;
    }
    mean /= r;
    let norm2 = |x: &DVector<f64>| (x.transpose() * metric * x)[(0, 0)];
    let bias = norm2(&(&mean - truth)).max(0.0).sqrt();
    let sd = (samples.iter().map(|s| norm2(&(s - &mean))).sum::<f64>() / r).max(0.0).sqrt();
    let rmse = (samples.iter().map(|s| norm2(&(s - truth))).sum::<f64>() / r).max(0.0).sqrt();
    ErrorRow { target, bias, sd, rmse }
}

/// Monte Carlo study: simulate, fit the trend-only working model, and
/// summarize the errors against `θ*`, `η₀`, `λ₀ = exp(θ*ᵀβ)` and `c̃₀`.
///
/// `threads = None` uses the global rayon pool. Results do not depend on
/// the number of workers.
pub fn run_study(model: &SimModel, replications: usize, config: &FitConfig, threads: Option<usize>) -> Result<StudyOutcome> {
    if replications < 2 {
        return Err(Error::Config("a study needs at least 2 replications".into()));
    }
    model.validate()?;
    let grid = model.grid()?;
    let table = BasisTable::new(&model.basis, &grid)?;

    let replicate = |rep: usize| -> Result<ReplicateRecord> {
        let series = model.simulate_replicate(rep as u64)?;
        let fit = fit_trend_only(&series, &model.basis, &grid, config)?;
        let omega = if fit.converged {
            estimate_sandwich(&fit, &series, &model.basis, &grid).ok().map(|s| s.blocks())
        } else {
            None
        };
        Ok(ReplicateRecord {
            index: rep,
            converged: fit.converged,
            fit,
            omega,
        })
    };

    let results: Vec<Result<ReplicateRecord>> = match threads {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            pool.install(|| (0..replications).into_par_iter().map(replicate).collect())
        }
        None => (0..replications).into_par_iter().map(replicate).collect(),
    };
    let records = results.into_iter().collect::<Result<Vec<_>>>()?;

    let used: Vec<&ReplicateRecord> = records.iter().filter(|r| r.converged).collect();
    let excluded = records.len() - used.len();
    if excluded > 0 {
        log::warn!("{excluded} of {replications} replicates did not converge and were excluded");
    }
    if used.len() < 2 {
        return Err(Error::NotConverged("fewer than two replicates converged"));
    }

    let theta_star = DVector::from_vec(model.theta_star());
    let eta0 = DVector::from_column_slice(&model.eta0);
    let lambda0 = DVector::from_vec(table.spline_at_nodes(theta_star.as_slice()).iter().map(|v| v.exp()).collect());
    let q = model.trend.q;
    let p = model.basis.dim();

    let thetas: Vec<_> = used.iter().map(|r| DVector::from_column_slice(&r.fit.params.theta[0])).collect();
    let etas: Vec<_> = used.iter().map(|r| DVector::from_column_slice(&r.fit.params.eta)).collect();
    let lambdas: Vec<_> = used
        .iter()
        .map(|r| DVector::from_vec(table.spline_at_nodes(&r.fit.params.theta[0]).iter().map(|v| v.exp()).collect()))
        .collect();
    let node_metric = DMatrix::from_diagonal(&DVector::from_column_slice(grid.weights()));

    let rows = vec![
        error_row(Target::Theta, &thetas, &theta_star, &DMatrix::identity(p, p)),
        error_row(Target::Eta, &etas, &eta0, &DMatrix::identity(q, q)),
        error_row(Target::Intensity, &lambdas, &lambda0, &node_metric),
        error_row(Target::Trend, &etas, &eta0, &monomial_gram(q)),
    ];

    Ok(StudyOutcome {
        summary: ErrorSummary {
            scenario: model.scenario.name().to_string(),
            n: model.n,
            replications: used.len(),
            excluded,
            rows,
        },
        records,
    })
}
