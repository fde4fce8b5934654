//! Estimation of trend and seasonality in time series of temporal point
//! processes.
//!
//! Each day `t` contributes a pattern of event times in a bounded interval.
//! The mean intensity is modeled as `exp(c(t) + μ(u) + s_{j(t)}(u))` with a
//! polynomial trend `c`, a spline mean `μ` and seasonal spline deformations
//! `s_j`, fitted by maximizing a Poisson working likelihood. Sandwich
//! covariances give pointwise bands that stay valid when the true process
//! is a log-Gaussian Cox process.

pub mod basis;
pub mod covariance;
mod error;
pub mod io;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod simulate;

pub use basis::{make_bspline_basis, BasisSpec, Interval, SeasonIndexer, TrendMode, TrendSpec};
pub use covariance::{estimate_sandwich, IntensityVariance, OmegaBlocks, SandwichParts};
pub use error::{Error, Result};
pub use io::{Config, FitDocument, LoadMode};
pub use model::{fit, predict, FitConfig, FitResult, Params, PatternSeries, PointPattern, Predictor};
pub use quadrature::{BasisTable, QuadGrid};
pub use simulate::{run_study, ErrorSummary, SimModel};
