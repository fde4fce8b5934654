//! `pptrend`: fit trend and seasonality models to daily event times.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use chrono::NaiveDate;
use pptrend::covariance::{band_intensity, band_trend, IntensityVariance};
use pptrend::io::{load_events, write_summary_csv, Config, FitDocument, LoadMode};
use pptrend::model::{fit, predict};
use pptrend::simulate::{run_study, SimModel};
use pptrend::{estimate_sandwich, Error};

const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;
const EXIT_NO_INPUT: u8 = 66;
const EXIT_SOFTWARE: u8 = 70;
const EXIT_IO: u8 = 74;

#[derive(Parser)]
#[command(name = "pptrend", version, about = "Trend and seasonality for time series of point patterns")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model to an event file and write a fit document.
    Fit {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Read raw `timestamp` rows instead of `day,u` rows.
        #[arg(long)]
        raw: bool,
        /// Date that becomes day 1 in raw mode (YYYY-MM-DD).
        #[arg(long, requires = "raw")]
        origin: Option<NaiveDate>,
        /// Hour at which a day starts in raw mode.
        #[arg(long, default_value_t = 0.0, requires = "raw")]
        day_boundary: f64,
        /// Factor from hours to the time unit of the domain in raw mode.
        #[arg(long, default_value_t = 1.0, requires = "raw")]
        clock_scale: f64,
    },
    /// Monte Carlo error study for a simulation scenario.
    Simulate {
        #[arg(long, value_parser = ["i", "ii", "iii"])]
        scenario: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        reps: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pointwise confidence bands from a fit document.
    Bands {
        #[arg(long)]
        fit: PathBuf,
        /// Level `1 − alpha`; defaults to the configured alpha.
        #[arg(long)]
        alpha: Option<f64>,
        /// Number of equally spaced points for the intensity bands.
        #[arg(long, default_value_t = 97)]
        grid: usize,
        #[arg(long, value_enum, default_value_t = Variance::Delta)]
        variance: Variance,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exponentiated trend and seasonal intensity curves for plotting.
    PlotData {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long, default_value_t = 241)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Variance {
    Delta,
    SingleFactor,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_SOFTWARE);
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => EXIT_NO_INPUT,
                Error::Io(_) => EXIT_IO,
                Error::Csv(c) => match c.kind() {
                    csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => EXIT_NO_INPUT,
                    csv::ErrorKind::Io(_) => EXIT_IO,
                    _ => EXIT_DATA,
                },
                Error::Parse { .. }
                | Error::Validation { .. }
                | Error::EmptyInput(_)
                | Error::Json(_)
                | Error::Config(_)
                | Error::InvalidKnots(_)
                | Error::InvalidDomain { .. }
                | Error::OutOfDomain { .. }
                | Error::Dimension { .. }
                | Error::InvalidInput(_) => EXIT_DATA,
                Error::NotConverged(_) => EXIT_NOT_CONVERGED,
                _ => EXIT_SOFTWARE,
            };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            return if io.kind() == std::io::ErrorKind::NotFound {
                EXIT_NO_INPUT
            } else {
                EXIT_IO
            };
        }
    }
    EXIT_SOFTWARE
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Fit {
            events,
            config,
            out,
            raw,
            origin,
            day_boundary,
            clock_scale,
        } => {
            let cfg = Config::load(&config).with_context(|| format!("reading config {}", config.display()))?;
            let mode = if raw {
                LoadMode::Raw {
                    origin,
                    day_boundary,
                    clock_scale,
                }
            } else {
                LoadMode::Presliced
            };
            let series = load_events(&events, &mode, &cfg).with_context(|| format!("reading events {}", events.display()))?;
            let basis = cfg.basis()?;
            let grid = cfg.grid(&basis)?;
            let result = fit(&series, &basis, &grid, &cfg.optimizer)?;
            for w in &result.warnings {
                log::warn!("{w}");
            }
            let omega = if result.converged {
                match estimate_sandwich(&result, &series, &basis, &grid) {
                    Ok(parts) => Some(parts.blocks()),
                    Err(e) => {
                        log::warn!("no covariance estimate: {e}");
                        None
                    }
                }
            } else {
                None
            };
            let doc = FitDocument::new(&cfg, series.trend(), &result, omega);
            doc.write(&out).with_context(|| format!("writing {}", out.display()))?;
            if result.converged {
                Ok(0)
            } else {
                eprintln!(
                    "warning: fit did not converge after {} iterations (gradient norm {:.3e})",
                    result.iterations, result.gradient_norm
                );
                Ok(EXIT_NOT_CONVERGED)
            }
        }
        Command::Simulate {
            scenario,
            n,
            reps,
            seed,
            out,
        } => {
            let model = SimModel::preset(&scenario, n, seed)?;
            let outcome = run_study(&model, reps, &Default::default(), cli.threads)?;
            if outcome.summary.excluded > 0 {
                eprintln!(
                    "warning: {} of {reps} replicates did not converge and were excluded",
                    outcome.summary.excluded
                );
            }
            let mut w = create(&out)?;
            write_summary_csv(&mut w, &[outcome.summary])?;
            w.flush()?;
            Ok(0)
        }
        Command::Bands {
            fit,
            alpha,
            grid,
            variance,
            out,
        } => {
            let doc = FitDocument::read(&fit).with_context(|| format!("reading fit {}", fit.display()))?;
            let alpha = alpha.unwrap_or(doc.config.alpha);
            if grid < 2 {
                bail!(Error::InvalidInput("--grid must be at least 2".into()));
            }
            let Some(omega) = doc.omega.clone() else {
                bail!(Error::InvalidInput("fit document has no covariance blocks".into()));
            };
            let result = doc.fit_result();
            let basis = doc.config.basis()?;
            let variance = match variance {
                Variance::Delta => IntensityVariance::DeltaMethod,
                Variance::SingleFactor => IntensityVariance::SingleFactor,
            };
            let pred = predict(&result, &basis, &doc.trend)?;
            let mut w = csv::Writer::from_writer(create(&out)?);
            w.write_record(["kind", "j", "t", "u", "estimate", "lo", "hi"])?;
            for t in 1..=doc.n {
                let (lo, hi) = band_trend(&result, &omega, &doc.trend, t, alpha)?;
                let est = pred.trend(t)?;
                w.write_record(["trend", "", &t.to_string(), "", &est.to_string(), &lo.to_string(), &hi.to_string()])?;
            }
            let dom = basis.domain();
            for j in 1..=result.params.d() {
                for k in 0..grid {
                    let u = dom.lo + dom.length() * k as f64 / (grid - 1) as f64;
                    let est = pred.intensity(j, u)?;
                    let (lo, hi) = band_intensity(&result, &omega, &basis, j, u, alpha, variance)?;
                    w.write_record(["intensity", &j.to_string(), "", &u.to_string(), &est.to_string(), &lo.to_string(), &hi.to_string()])?;
                }
            }
            w.flush()?;
            Ok(0)
        }
        Command::PlotData { fit, grid, out } => {
            let doc = FitDocument::read(&fit).with_context(|| format!("reading fit {}", fit.display()))?;
            if grid < 2 {
                bail!(Error::InvalidInput("--grid must be at least 2".into()));
            }
            let result = doc.fit_result();
            let basis = doc.config.basis()?;
            let pred = predict(&result, &basis, &doc.trend)?;
            let mut w = csv::Writer::from_writer(create(&out)?);
            w.write_record(["curve", "j", "x", "value"])?;
            for t in 1..=doc.n {
                w.write_record(["exp_trend", "", &t.to_string(), &pred.trend(t)?.exp().to_string()])?;
            }
            let dom = basis.domain();
            for j in 1..=pred.seasons() {
                for k in 0..grid {
                    let u = dom.lo + dom.length() * k as f64 / (grid - 1) as f64;
                    w.write_record(["intensity", &j.to_string(), &u.to_string(), &pred.intensity(j, u)?.to_string()])?;
                }
            }
            w.flush()?;
            Ok(0)
        }
    }
}
