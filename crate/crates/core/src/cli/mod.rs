//! Command-line front end: `phase`, `scan`, `bell` and `fit`.
//!
//! Exit codes: 0 success, 1 usage, 2 file or parse failure, 3 numerical
//! failure.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::analysis::{fit_sinusoid, run_bell_experiment, AnalysisError, BELL_IDLER_PHASES};
use crate::montecarlo::{run_scan, ScanSpec, ScanVariable};
use crate::polarization::{
    circuit_for_loop, geometric_phase, propagate, signal_loop, solid_angle, wrap_phase,
    PolarizationState,
};
use config::{parse_quantity, ConfigError, Dimension, ExperimentConfig};

/// Largest tolerated gap between Jones-propagated and area-derived phases.
pub const PHASE_AGREEMENT: f64 = 1e-9;

/// Default number of `2β_s` points per fringe in the Bell experiment.
pub const DEFAULT_BELL_POINTS: usize = 10;

#[derive(Debug, Parser)]
#[command(
    name = "geophase",
    version,
    about = "Geometric-phase two-photon interferometer: simulation, fringe fits and Bell tests"
)]
pub struct Cli {
    /// Override the random seed from the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Print the effective configuration in canonical form and exit
    #[arg(long, global = true)]
    dump_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Geometric phase of one double-pass waveplate loop
    Phase {
        /// Rotatable waveplate angle β with unit, e.g. `22.5deg` or `0.39rad`
        #[arg(long, allow_hyphen_values = true)]
        beta: String,
    },
    /// Simulate a fringe scan and print `setting,rate_theory,counts` CSV
    Scan {
        config: PathBuf,
        /// two_beta_s, two_beta_i, x_s or x_i
        #[arg(long, default_value = "two_beta_s")]
        variable: String,
        /// First setting with unit (default 0 deg for phases)
        #[arg(long, allow_hyphen_values = true)]
        start: Option<String>,
        /// End of the range, excluded (default 360 deg for phases)
        #[arg(long, allow_hyphen_values = true)]
        stop: Option<String>,
        #[arg(long, default_value_t = 16)]
        points: usize,
    },
    /// Run the four-setting Bell experiment and report S
    Bell {
        config: PathBuf,
        /// Points per 2β_s fringe
        #[arg(long, default_value_t = DEFAULT_BELL_POINTS)]
        points: usize,
        /// Also write per-setting fit results as CSV to this file
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Fit a sinusoid to a `setting,counts` CSV file
    Fit {
        csv: PathBuf,
        /// Fringe angular frequency per unit of setting
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Parse(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Parse(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Parse(format!("I/O error: {e}"))
    }
}

type CliResult = Result<(), CliError>;

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> CliResult {
    if cli.dump_config {
        let config_path = match &cli.command {
            Some(Command::Scan { config, .. }) | Some(Command::Bell { config, .. }) => {
                Some(config.as_path())
            }
            _ => None,
        };
        let mut config = match config_path {
            Some(path) => load_config(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = cli.seed {
            config.seed = seed;
        }
        write!(out, "{}", config.dump())?;
        return Ok(());
    }

    match cli.command {
        None => Err(CliError::Usage(
            "no command given (try `geophase --help`)".into(),
        )),
        Some(Command::Phase { beta }) => cmd_phase(&beta, out),
        Some(Command::Scan {
            config,
            variable,
            start,
            stop,
            points,
        }) => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            cmd_scan(&cfg, &variable, start.as_deref(), stop.as_deref(), points, out)
        }
        Some(Command::Bell {
            config,
            points,
            csv,
        }) => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            cmd_bell(&cfg, points, csv.as_deref(), out)
        }
        Some(Command::Fit { csv, omega }) => cmd_fit(&csv, omega, out),
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    ExperimentConfig::parse(&text).map_err(|e: ConfigError| {
        CliError::Parse(format!("{}: {e}", path.display()))
    })
}

fn full(x: f64) -> String {
    format!("{x:.14e}")
}

/// Loop phase from Jones propagation against half the enclosed solid angle.
pub fn cmd_phase(beta_text: &str, out: &mut dyn Write) -> CliResult {
    let beta = parse_quantity(beta_text, Dimension::Angle).map_err(CliError::Usage)?;
    let propagated = propagate(&signal_loop(beta), &PolarizationState::horizontal())
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let circuit = circuit_for_loop(beta);
    let omega = solid_angle(&circuit);
    let area_phase = geometric_phase(&circuit);
    let phase = display_phase(propagated.accumulated_phase);
    let difference = wrap_phase(propagated.accumulated_phase - area_phase);

    writeln!(out, "beta            = {} rad ({} deg)", full(beta), beta.to_degrees())?;
    writeln!(out, "jones_phase     = {} rad ({:.9} deg)", full(phase), phase.to_degrees())?;
    writeln!(out, "solid_angle     = {} sr ({:.9} deg)", full(omega), omega.to_degrees())?;
    writeln!(out, "half_solid_angle= {} rad", full(display_phase(area_phase)))?;
    writeln!(out, "difference      = {:.3e} rad", difference)?;
    if difference.abs() > PHASE_AGREEMENT {
        return Err(CliError::Numerical(format!(
            "Jones phase and half solid angle disagree by {difference:e} rad"
        )));
    }
    Ok(())
}

/// Wrapped into `(-π, π]`, with values a rounding error below `-π` shown as `π`
/// and values a rounding error below zero shown as zero.
fn display_phase(x: f64) -> f64 {
    let w = wrap_phase(x);
    if (w + std::f64::consts::PI).abs() < 1e-12 {
        std::f64::consts::PI
    } else if w.abs() < 1e-15 {
        0.0
    } else {
        w
    }
}

pub fn cmd_scan(
    cfg: &ExperimentConfig,
    variable: &str,
    start: Option<&str>,
    stop: Option<&str>,
    points: usize,
    out: &mut dyn Write,
) -> CliResult {
    let variable: ScanVariable = variable
        .parse()
        .map_err(|e: crate::montecarlo::ScanError| CliError::Usage(e.to_string()))?;
    let (dimension, default_start, default_stop) = if variable.is_geometric() {
        (Dimension::Angle, Some(0.0), Some(std::f64::consts::TAU))
    } else {
        (Dimension::Length, None, None)
    };
    let bound = |text: Option<&str>, default: Option<f64>, name: &str| match text {
        Some(t) => parse_quantity(t, dimension).map_err(CliError::Usage),
        None => default.ok_or_else(|| {
            CliError::Usage(format!("--{name} is required when scanning {variable}"))
        }),
    };
    let start = bound(start, default_start, "start")?;
    let stop = bound(stop, default_stop, "stop")?;

    let setup = cfg.setup().map_err(|e| CliError::Parse(e.to_string()))?;
    let spec = ScanSpec::uniform(variable, start, stop, points, cfg.dwell, cfg.seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let scan = run_scan(&setup, &spec);
    let rates = scan.theory_rates();

    let mut writer = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::Parse(format!("writing CSV: {e}"));
    writer
        .write_record(["setting", "rate_theory", "counts"])
        .map_err(csv_err)?;
    for ((&x, &rate), &n) in spec.points().iter().zip(&rates).zip(&scan.counts) {
        writer
            .write_record([full(x), full(rate), n.to_string()])
            .map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn cmd_bell(
    cfg: &ExperimentConfig,
    points: usize,
    csv_path: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult {
    if points < 4 {
        return Err(CliError::Usage(format!(
            "--points must be at least 4, got {points}"
        )));
    }
    let setup = cfg.setup().map_err(|e| CliError::Parse(e.to_string()))?;
    let grid: Vec<f64> = (0..points)
        .map(|k| std::f64::consts::TAU * k as f64 / points as f64)
        .collect();
    let experiment = run_bell_experiment(&setup, &grid, cfg.dwell, cfg.seed)?;
    let r = &experiment.result;

    writeln!(
        out,
        "Bell test: {points} points per fringe, {} s dwell, seed {}",
        cfg.dwell, cfg.seed
    )?;
    for (two_beta_i, fit) in BELL_IDLER_PHASES.iter().zip(&experiment.fits) {
        writeln!(
            out,
            "2beta_i = {:>6.1} deg: V = {:.4} ± {:.4}, phase = {:+.4} ± {:.4} rad",
            two_beta_i.to_degrees(),
            fit.visibility,
            fit.sigma_visibility,
            fit.phase,
            fit.sigma_phase()
        )?;
    }
    writeln!(
        out,
        "phase steps      = {:+.4}, {:+.4}, {:+.4} rad (residuals {:+.4}, {:+.4}, {:+.4})",
        r.phase_steps[0],
        r.phase_steps[1],
        r.phase_steps[2],
        r.phase_residuals[0],
        r.phase_residuals[1],
        r.phase_residuals[2]
    )?;
    writeln!(
        out,
        "pooled V         = {:.4} ± {:.4}",
        r.pooled_visibility, r.sigma_pooled_visibility
    )?;
    writeln!(out, "S                = {:.4} ± {:.4}", r.s, r.sigma_s)?;
    writeln!(out, "violation        = {:.2} standard deviations", r.violation_sigmas)?;
    writeln!(out, "VIOLATION: {}", if r.violates() { "yes" } else { "no" })?;

    if let Some(path) = csv_path {
        let mut writer = csv::Writer::from_path(path)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        let csv_err = |e: csv::Error| CliError::Parse(format!("writing CSV: {e}"));
        writer
            .write_record([
                "two_beta_i",
                "visibility",
                "sigma_visibility",
                "phase",
                "sigma_phase",
                "offset",
                "amplitude",
            ])
            .map_err(csv_err)?;
        for (&two_beta_i, fit) in BELL_IDLER_PHASES.iter().zip(&experiment.fits) {
            writer
                .write_record([
                    full(two_beta_i),
                    full(fit.visibility),
                    full(fit.sigma_visibility),
                    full(fit.phase),
                    full(fit.sigma_phase()),
                    full(fit.offset),
                    full(fit.amplitude),
                ])
                .map_err(csv_err)?;
        }
        writer.flush()?;
    }
    Ok(())
}

/// Reads the `setting` and `counts` columns of a headed CSV file.
pub fn read_counts_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let parse_err = |msg: String| CliError::Parse(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| parse_err(e.to_string()))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse_err(format!("line 1: missing `{name}` column")))
    };
    let (setting_col, counts_col) = (column("setting")?, column("counts")?);

    let mut settings = Vec::new();
    let mut counts = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |col: usize, name: &str| -> Result<f64, CliError> {
            let text = record.get(col).unwrap_or("").trim();
            text.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                // 1-based column of the field start
                let column = (0..col)
                    .map(|k| record.get(k).map_or(0, str::len) + 1)
                    .sum::<usize>()
                    + 1;
                parse_err(format!(
                    "line {line}, column {column}: {name} `{text}` is not a number"
                ))
            })
        };
        settings.push(field(setting_col, "setting")?);
        counts.push(field(counts_col, "counts")?);
    }
    Ok((settings, counts))
}

pub fn cmd_fit(path: &Path, omega: f64, out: &mut dyn Write) -> CliResult {
    if !(omega.is_finite() && omega != 0.0) {
        return Err(CliError::Usage(format!("--omega must be finite and nonzero, got {omega}")));
    }
    let (settings, counts) = read_counts_csv(path)?;
    let fit = fit_sinusoid(&settings, &counts, omega)?;
    writeln!(out, "points     = {}", settings.len())?;
    writeln!(out, "offset     = {} ± {:.6e}", full(fit.offset), fit.sigma_offset())?;
    writeln!(out, "amplitude  = {}", full(fit.amplitude))?;
    writeln!(out, "phase      = {} ± {:.6e} rad", full(fit.phase), fit.sigma_phase())?;
    writeln!(
        out,
        "visibility = {} ± {:.6e}",
        full(fit.visibility),
        fit.sigma_visibility
    )?;
    Ok(())
}
