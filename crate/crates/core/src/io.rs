//! Event files, analysis configuration and fit documents.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::basis::{make_bspline_basis, BasisSpec, Interval, SeasonIndexer, TrendMode, TrendSpec};
use crate::covariance::OmegaBlocks;
use crate::error::{Error, Result};
use crate::model::{FitConfig, FitResult, Params, PatternSeries, PointPattern};
use crate::quadrature::{QuadGrid, DEFAULT_NODES_PER_PANEL, DEFAULT_SUBPANELS};
use crate::simulate::ErrorSummary;

pub const FORMAT_VERSION: u32 = 1;

/// How event rows are turned into daily patterns.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LoadMode {
    /// Header `day,u`: day index and within-day time.
    #[default]
    Presliced,
    /// Header containing `timestamp`: naive local ISO-8601 times.
    Raw {
        /// Date assigned day 1; defaults to the earliest date in the file.
        origin: Option<NaiveDate>,
        /// Hour at which a new day starts.
        day_boundary: f64,
        /// Multiplier from hours since the boundary to `u`.
        clock_scale: f64,
    },
}

impl LoadMode {
    pub fn raw() -> Self {
        LoadMode::Raw {
            origin: None,
            day_boundary: 0.0,
            clock_scale: 1.0,
        }
    }
}

fn start_of(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.byte() as usize)
}

/// 1-based line of the record starting at byte `start`. The reader's own
/// line counter points at blank lines skipped before a record, so count
/// from the first byte that is not a line break.
fn line_at(text: &[u8], start: usize) -> usize {
    let first = text[start.min(text.len())..]
        .iter()
        .position(|&c| c != b'\n' && c != b'\r')
        .map_or(text.len(), |k| start + k);
    1 + text[..first].iter().filter(|&&c| c == b'\n').count()
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 4] = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

/// Reads an event file into daily patterns `t = 1..=max day`.
pub fn read_patterns<R: Read>(mut input: R, mode: &LoadMode, domain: Interval) -> Result<Vec<PointPattern>> {
    let mut text = Vec::new();
    input.read_to_end(&mut text)?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_slice());
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::EmptyInput("event file has no header".into()));
    }
    let mut days: Vec<(usize, f64)> = Vec::new();
    match *mode {
        LoadMode::Presliced => {
            if headers.len() != 2 || &headers[0] != "day" || &headers[1] != "u" {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header `day,u`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
                });
            }
            for rec in rdr.records() {
                let rec = rec?;
                let line = || line_at(&text, start_of(&rec));
                let day: usize = rec[0].parse().ok().filter(|&d| d >= 1).ok_or_else(|| Error::Parse {
                    line: line(),
                    message: format!("day index `{}` is not a positive integer", &rec[0]),
                })?;
                let u: f64 = rec[1].parse().map_err(|_| Error::Parse {
                    line: line(),
                    message: format!("time `{}` is not a number", &rec[1]),
                })?;
                check_time(u, domain).map_err(|message| Error::Validation { line: line(), message })?;
                days.push((day, u));
            }
        }
        LoadMode::Raw {
            origin,
            day_boundary,
            clock_scale,
        } => {
            if !(0.0..24.0).contains(&day_boundary) || !(clock_scale > 0.0) {
                return Err(Error::Config("day boundary must lie in [0, 24) and clock scale must be positive".into()));
            }
            let col = headers.iter().position(|h| h == "timestamp").ok_or_else(|| Error::Parse {
                line: 1,
                message: "expected a `timestamp` column".into(),
            })?;
            let mut stamps = Vec::new();
            for rec in rdr.records() {
                let rec = rec?;
                let start = start_of(&rec);
                let raw = rec.get(col).unwrap_or("");
                let ts = parse_timestamp(raw).ok_or_else(|| Error::Parse {
                    line: line_at(&text, start),
                    message: format!("cannot parse timestamp `{raw}`"),
                })?;
                // Shift so that the day boundary falls at midnight.
                let shifted = ts - chrono::Duration::milliseconds((day_boundary * 3_600_000.0).round() as i64);
                stamps.push((start, shifted));
            }
            let origin = match origin {
                Some(o) => o,
                None => match stamps.iter().map(|(_, s)| s.date()).min() {
                    Some(d) => d,
                    None => return Err(Error::EmptyInput("event file has no rows".into())),
                },
            };
            for (start, s) in stamps {
                let offset = (s.date() - origin).num_days();
                if offset < 0 {
                    return Err(Error::Validation {
                        line: line_at(&text, start),
                        message: format!("timestamp precedes the origin date {origin}"),
                    });
                }
                let secs = s.time().num_seconds_from_midnight() as f64 + s.time().nanosecond() as f64 * 1e-9;
                let u = secs / 3600.0 * clock_scale;
                check_time(u, domain).map_err(|message| Error::Validation {
                    line: line_at(&text, start),
                    message,
                })?;
                days.push((offset as usize + 1, u));
            }
        }
    }
    if days.is_empty() {
        return Err(Error::EmptyInput("event file has no rows".into()));
    }
    let n = days.iter().map(|&(d, _)| d).max().unwrap_or(0);
    let mut points = vec![Vec::new(); n];
    for (d, u) in days {
        points[d - 1].push(u);
    }
    Ok(points
        .into_iter()
        .map(|mut p| {
            p.sort_by(f64::total_cmp);
            PointPattern::new(p)
        })
        .collect())
}

fn check_time(u: f64, domain: Interval) -> std::result::Result<(), String> {
    if u.is_finite() && u >= domain.lo && u < domain.hi {
        Ok(())
    } else {
        Err(format!("time {u} outside [{}, {})", domain.lo, domain.hi))
    }
}

/// Loads an event file and assembles the series described by `config`.
pub fn load_events(path: impl AsRef<Path>, mode: &LoadMode, config: &Config) -> Result<PatternSeries> {
    let file = File::open(path.as_ref())?;
    let patterns = read_patterns(BufReader::new(file), mode, config.domain)?;
    config.series(patterns)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrendModeName {
    Residue,
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrendConfig {
    pub mode: TrendModeName,
    pub q: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl Default for TrendConfig {
    fn default() -> Self {
        Self {
            mode: TrendModeName::Residue,
            q: 3,
            r: None,
            n: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    pub nodes_per_panel: usize,
    /// Panels per knot interval.
    pub subpanels: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            nodes_per_panel: DEFAULT_NODES_PER_PANEL,
            subpanels: DEFAULT_SUBPANELS,
        }
    }
}

/// One analysis: basis, seasons, trend, solver and band level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub domain: Interval,
    pub spline_degree: usize,
    pub interior_knots: usize,
    pub d: usize,
    pub trend: TrendConfig,
    pub quadrature: QuadratureConfig,
    pub optimizer: FitConfig,
    pub alpha: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            domain: Interval { lo: 0.0, hi: 24.0 },
            spline_degree: 3,
            interior_knots: 4,
            d: 7,
            trend: TrendConfig::default(),
            quadrature: QuadratureConfig::default(),
            optimizer: FitConfig::default(),
            alpha: 0.05,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut text = String::new();
        File::open(path.as_ref())?.read_to_string(&mut text)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        Interval::new(self.domain.lo, self.domain.hi)?;
        if self.d == 0 {
            return Err(Error::Config("d must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if let Some(r) = self.trend.r {
            if self.trend.mode == TrendModeName::Residue && (r == 0 || r % self.d != 0) {
                return Err(Error::Config(format!("trend period r = {r} must be a positive multiple of d = {}", self.d)));
            }
        }
        make_bspline_basis(self.domain, self.spline_degree, self.interior_knots)?;
        Ok(())
    }

    pub fn basis(&self) -> Result<BasisSpec> {
        make_bspline_basis(self.domain, self.spline_degree, self.interior_knots)
    }

    pub fn grid(&self, basis: &BasisSpec) -> Result<QuadGrid> {
        QuadGrid::for_basis_with(basis, self.quadrature.subpanels, self.quadrature.nodes_per_panel)
    }

    /// Trend spec for a series of `n` days. In residue mode `r` defaults to
    /// the largest multiple of `d` not exceeding `n`.
    pub fn trend_spec(&self, n: usize) -> Result<TrendSpec> {
        match self.trend.mode {
            TrendModeName::Residue => {
                let r = match self.trend.r {
                    Some(r) => r,
                    None => {
                        let r = n / self.d * self.d;
                        if r == 0 {
                            return Err(Error::Config(format!("series of {n} days is shorter than d = {}", self.d)));
                        }
                        r
                    }
                };
                TrendSpec::residue(self.trend.q, r)
            }
            TrendModeName::Normalized => TrendSpec::normalized(self.trend.q, self.trend.n.unwrap_or(n)),
        }
    }

    pub fn series(&self, patterns: Vec<PointPattern>) -> Result<PatternSeries> {
        let trend = self.trend_spec(patterns.len())?;
        let r = match trend.mode {
            TrendMode::Residue { r } => Some(r),
            TrendMode::Normalized { .. } => None,
        };
        let indexer = SeasonIndexer::new(self.d, r)?;
        PatternSeries::new(patterns, self.domain, indexer, trend)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub raw_gradient_norm: f64,
    pub objective: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Persisted fit: configuration echo, estimates and sandwich blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub format_version: u32,
    pub config: Config,
    pub trend: TrendSpec,
    pub n: usize,
    pub theta: Vec<Vec<f64>>,
    pub eta: Vec<f64>,
    pub mu: Vec<f64>,
    pub seasonal: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<OmegaBlocks>,
    pub diagnostics: Diagnostics,
}

impl FitDocument {
    pub fn new(config: &Config, trend: TrendSpec, fit: &FitResult, omega: Option<OmegaBlocks>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config: config.clone(),
            trend,
            n: fit.n,
            theta: fit.params.theta.clone(),
            eta: fit.params.eta.clone(),
            mu: fit.mu.clone(),
            seasonal: fit.seasonal.clone(),
            omega,
            diagnostics: Diagnostics {
                converged: fit.converged,
                iterations: fit.iterations,
                gradient_norm: fit.gradient_norm,
                raw_gradient_norm: fit.raw_gradient_norm,
                objective: fit.objective_value,
                warnings: fit.warnings.clone(),
            },
        }
    }

    /// Rebuilds the fit summary (without the iteration trace).
    pub fn fit_result(&self) -> FitResult {
        FitResult {
            params: Params {
                theta: self.theta.clone(),
                eta: self.eta.clone(),
            },
            mu: self.mu.clone(),
            seasonal: self.seasonal.clone(),
            objective_value: self.diagnostics.objective,
            gradient_norm: self.diagnostics.gradient_norm,
            raw_gradient_norm: self.diagnostics.raw_gradient_norm,
            iterations: self.diagnostics.iterations,
            converged: self.diagnostics.converged,
            trace: Vec::new(),
            warnings: self.diagnostics.warnings.clone(),
            n: self.n,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FitDocument = serde_json::from_str(text)?;
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported fit document version {}",
                doc.format_version
            )));
        }
        let d = doc.config.d;
        if doc.theta.len() != d || doc.seasonal.len() != d || doc.eta.len() != doc.trend.q {
            return Err(Error::InvalidInput("fit document dimensions disagree with its configuration".into()));
        }
        Ok(doc)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = File::create(path.as_ref())?;
        f.write_all(self.to_json()?.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let mut text = String::new();
        File::open(path.as_ref())?.read_to_string(&mut text)?;
        Self::from_json(&text)
    }
}

/// Writes study summaries as `scenario,n,target,bias,sd,rmse`.
pub fn write_summary_csv<W: Write>(out: W, summaries: &[ErrorSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "n", "target", "bias", "sd", "rmse"])?;
    for s in summaries {
        for row in &s.rows {
            w.write_record([
                s.scenario.clone(),
                s.n.to_string(),
                row.target.name().to_string(),
                row.bias.to_string(),
                row.sd.to_string(),
                row.rmse.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
