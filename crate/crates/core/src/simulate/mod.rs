//! Log-Gaussian Cox simulation and the Monte Carlo error study.

mod process;
pub mod rng;
mod study;

pub use process::{
    ar1_path, normalize_zeta, sample_pattern, sample_pattern_with_stats, CoxGenerator, LatentProcess, ThinningStats,
};
pub use study::{
    error_row, monomial_gram, run_study, ErrorRow, ErrorSummary, ReplicateRecord, Scenario, SimModel, StudyOutcome,
    Target, AR_COEF, ETA0, SIGMA, TAU0, THETA0,
};
