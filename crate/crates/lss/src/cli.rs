//! Argument parsing and dispatch for the `lss` binary.
//!
//! Exit codes: 0 success, 1 numeric or runtime failure, 2 usage or config
//! error. Seeds fall back to the `LSS_SEED` environment variable when neither
//! the command line nor the config file sets one.

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lss_core::fd::FdConfig;
use lss_core::pipeline::{compute_sensitivity, verify_on_attractor, RunConfig};
use lss_core::{BundledMap, MapSystem};
use serde::{Deserialize, Serialize};

use crate::config::{parse_fit_range, ConfigError, FileConfig};
use crate::experiments::{
    self, default_truth, ConvergenceConfig, FdSettings, SlopeFit, SweepConfig,
};
use crate::fd::fd_derivative;
use crate::output::{fmt_f64, to_csv, to_json, CsvRecord};

pub const SEED_ENV: &str = "LSS_SEED";

#[derive(Debug, Parser)]
#[command(name = "lss", version, about = "Least squares shadowing sensitivity of long-time averages")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One LSS derivative estimate; prints a JSON record
    Run(RunArgs),
    /// Ensemble central finite-difference reference derivative
    Fd(FdArgs),
    /// Per-step distance between the LSS tangent and the analytic shadowing direction
    ErrProfile(ErrProfileArgs),
    /// LSS estimates over an s grid next to finite-difference references
    Sweep(SweepArgs),
    /// Mean absolute error against a reference value as n grows, with log-log slopes
    Converge(ConvergeArgs),
    /// Compare analytic derivatives with central differences at attractor points
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML config file; keys are the long flag names
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file (stdout when omitted)
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    /// Map name: solenoid, affine or cat [default: solenoid]
    #[arg(long)]
    pub map: Option<String>,
    /// Parameter value
    #[arg(long)]
    pub s: Option<f64>,
    /// Spin-up steps discarded before the trajectory [default: per map]
    #[arg(long)]
    pub n0: Option<usize>,
    /// RNG seed [default: $LSS_SEED, else 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub map: MapArgs,
    /// Trajectory length [default: 1000]
    #[arg(long)]
    pub n: Option<usize>,
    /// Steps dropped from each end of the averaging window [default: 0]
    #[arg(long)]
    pub trim: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct FdArgs {
    #[command(flatten)]
    pub map: MapArgs,
    /// Half step of the central difference [default: 0.05]
    #[arg(long)]
    pub ds: Option<f64>,
    /// Trajectories per side [default: 100]
    #[arg(long)]
    pub ensemble: Option<usize>,
    /// Length of each trajectory [default: 1000]
    #[arg(long)]
    pub n: Option<usize>,
    /// Worker threads [default: 1]
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ErrProfileArgs {
    #[command(flatten)]
    pub map: MapArgs,
    /// Trajectory length [default: 100]
    #[arg(long)]
    pub n: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub map: MapArgs,
    /// Comma-separated s values [default: 0.9,1.0,1.1]
    #[arg(long, value_delimiter = ',')]
    pub s_list: Vec<f64>,
    /// LSS trajectory length [default: 1000]
    #[arg(long)]
    pub n: Option<usize>,
    /// LSS repetitions per s [default: 4]
    #[arg(long)]
    pub reps: Option<usize>,
    /// Averaging trim for the LSS estimates [default: 0]
    #[arg(long)]
    pub trim: Option<usize>,
    /// Finite-difference trajectories per side [default: 1000]
    #[arg(long)]
    pub ensemble: Option<usize>,
    /// Finite-difference trajectory length [default: 5000]
    #[arg(long)]
    pub fd_n: Option<usize>,
    /// Finite-difference spin-up [default: same as --n0]
    #[arg(long)]
    pub fd_n0: Option<usize>,
    /// Finite-difference half step [default: 0.05]
    #[arg(long)]
    pub ds: Option<f64>,
    /// Worker threads [default: 1]
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub map: MapArgs,
    /// Comma-separated trajectory lengths [default: 100,200,400,800]
    #[arg(long, value_delimiter = ',')]
    pub n_list: Vec<usize>,
    /// Seeds per length [default: 16]
    #[arg(long)]
    pub reps: Option<usize>,
    /// Reference derivative [default: 0.931450 for solenoid at s = 1]
    #[arg(long)]
    pub truth: Option<f64>,
    /// Averaging trim [default: 20]
    #[arg(long)]
    pub trim: Option<usize>,
    /// Inclusive n range LO:HI for a slope fit; repeatable [default: lower and upper halves]
    #[arg(long)]
    pub fit_range: Vec<String>,
    /// Companion `n,mean_abs_error` CSV [default: <output stem>-mean.csv]
    #[arg(long)]
    pub mean_output: Option<PathBuf>,
    /// Worker threads [default: 1]
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub map: MapArgs,
    /// Number of attractor points [default: 100]
    #[arg(long)]
    pub points: Option<usize>,
    /// Finite-difference step [default: 1e-6]
    #[arg(long)]
    pub h: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numeric failure: {0}")]
    Numeric(lss_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("serialization error: {0}")]
    Serialize(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) => 2,
            _ => 1,
        }
    }
}

impl From<lss_core::Error> for CliError {
    fn from(e: lss_core::Error) -> Self {
        match e {
            lss_core::Error::InvalidConfig(msg) => Self::Usage(msg),
            other => Self::Numeric(other),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Serialize(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Serialize(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parsed map arguments merged with the config file.
struct Resolved {
    file: FileConfig,
    map: BundledMap,
    map_name: String,
    s: Option<f64>,
    n0: usize,
    seed: u64,
    output: Option<PathBuf>,
    format: Option<Format>,
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(text) => text
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={text:?} is not a valid seed"))),
        Err(_) => Ok(None),
    }
}

fn parse_format(text: &str) -> CliResult<Format> {
    Format::from_str(text, true).map_err(|_| CliError::Usage(format!("unknown format `{text}` (json or csv)")))
}

fn resolve(map: &MapArgs, common: &Common) -> CliResult<Resolved> {
    let file = match &common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let map_name = map.map.clone().or_else(|| file.map.clone()).unwrap_or_else(|| "solenoid".into());
    let sys = BundledMap::from_name(&map_name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown map `{map_name}` (expected one of: {})",
            BundledMap::NAMES.join(", ")
        ))
    })?;
    let seed = match map.seed.or(file.seed) {
        Some(seed) => seed,
        None => env_seed()?.unwrap_or(0),
    };
    let format = match (common.format, &file.format) {
        (Some(f), _) => Some(f),
        (None, Some(text)) => Some(parse_format(text)?),
        (None, None) => None,
    };
    Ok(Resolved {
        n0: map.n0.or(file.n0).unwrap_or_else(|| sys.default_spinup()),
        s: map.s.or(file.s),
        seed,
        output: common.output.clone().or_else(|| file.output.clone()),
        format,
        map: sys,
        map_name,
        file,
    })
}

fn emit(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn list_or<T: Clone>(cli: &[T], file: &Option<Vec<T>>, default: &[T]) -> Vec<T> {
    if !cli.is_empty() {
        cli.to_vec()
    } else if let Some(v) = file {
        v.clone()
    } else {
        default.to_vec()
    }
}

/// JSON record printed by `run`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub map: String,
    pub s: f64,
    pub n: usize,
    pub n0: usize,
    pub seed: u64,
    pub trim: usize,
    pub estimate: f64,
    #[serde(rename = "mean_J")]
    pub mean_j: f64,
    pub constraint_residual: f64,
    pub wall_time_s: f64,
}

impl CsvRecord for RunRecord {
    const HEADER: &'static [&'static str] = &[
        "map", "s", "n", "n0", "seed", "trim", "estimate", "mean_J", "constraint_residual", "wall_time_s",
    ];
    fn fields(&self) -> Vec<String> {
        vec![
            self.map.clone(),
            fmt_f64(self.s),
            self.n.to_string(),
            self.n0.to_string(),
            self.seed.to_string(),
            self.trim.to_string(),
            fmt_f64(self.estimate),
            fmt_f64(self.mean_j),
            fmt_f64(self.constraint_residual),
            fmt_f64(self.wall_time_s),
        ]
    }
}

/// JSON record printed by `fd`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdRecord {
    pub map: String,
    pub s: f64,
    pub ds: f64,
    pub ensemble: usize,
    pub n: usize,
    pub n0: usize,
    pub seed: u64,
    pub estimate: f64,
    pub sigma: f64,
    pub ci3: f64,
}

impl CsvRecord for FdRecord {
    const HEADER: &'static [&'static str] =
        &["map", "s", "ds", "ensemble", "n", "n0", "seed", "estimate", "sigma", "ci3"];
    fn fields(&self) -> Vec<String> {
        vec![
            self.map.clone(),
            fmt_f64(self.s),
            fmt_f64(self.ds),
            self.ensemble.to_string(),
            self.n.to_string(),
            self.n0.to_string(),
            self.seed.to_string(),
            fmt_f64(self.estimate),
            fmt_f64(self.sigma),
            fmt_f64(self.ci3),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyRecord {
    pub map: String,
    pub s: f64,
    pub points: usize,
    pub h: f64,
    pub seed: u64,
    pub max_rel_err_jac: f64,
    pub max_rel_err_paramderiv: f64,
    pub max_rel_err_objgrad: f64,
}

/// Slope summary printed by `converge`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergeSummary {
    pub map: String,
    pub s: f64,
    pub truth: f64,
    pub reps: usize,
    pub trim: usize,
    pub n0: usize,
    pub seed: u64,
    pub fits: Vec<SlopeFit>,
}

fn cmd_run(args: &RunArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let r = resolve(&args.map, &args.common)?;
    let cfg = RunConfig {
        s: r.s.unwrap_or(1.0),
        n: args.n.or(r.file.n).unwrap_or(1000),
        n0: r.n0,
        seed: r.seed,
        trim: args.trim.or(r.file.trim).unwrap_or(0),
    };
    cfg.validate()?;
    let start = Instant::now();
    let sens = compute_sensitivity(&r.map, &cfg)?;
    let record = RunRecord {
        map: r.map_name,
        s: cfg.s,
        n: cfg.n,
        n0: cfg.n0,
        seed: cfg.seed,
        trim: cfg.trim,
        estimate: sens.estimate,
        mean_j: sens.mean_j,
        constraint_residual: sens.constraint_residual,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let text = match r.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&record)?,
        Format::Csv => to_csv(&[record])?,
    };
    emit(r.output.as_deref(), &text, stdout)
}

fn cmd_fd(args: &FdArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let r = resolve(&args.map, &args.common)?;
    let cfg = FdConfig {
        s: r.s.unwrap_or(1.0),
        ds: args.ds.or(r.file.ds).unwrap_or(FdConfig::DEFAULT_DS),
        ensemble: args.ensemble.or(r.file.ensemble).unwrap_or(100),
        n: args.n.or(r.file.n).unwrap_or(1000),
        n0: r.n0,
        seed: r.seed,
    };
    cfg.validate()?;
    let jobs = args.jobs.or(r.file.jobs).unwrap_or(1);
    let res = fd_derivative(&r.map, &cfg, jobs)?;
    let record = FdRecord {
        map: r.map_name,
        s: cfg.s,
        ds: cfg.ds,
        ensemble: cfg.ensemble,
        n: cfg.n,
        n0: cfg.n0,
        seed: cfg.seed,
        estimate: res.estimate,
        sigma: res.sigma,
        ci3: res.ci3,
    };
    let text = match r.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&record)?,
        Format::Csv => to_csv(&[record])?,
    };
    emit(r.output.as_deref(), &text, stdout)
}

fn cmd_err_profile(args: &ErrProfileArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let r = resolve(&args.map, &args.common)?;
    let cfg = RunConfig {
        s: r.s.unwrap_or(2.0),
        n: args.n.or(r.file.n).unwrap_or(100),
        n0: r.n0,
        seed: r.seed,
        trim: 0,
    };
    cfg.validate()?;
    let profile = experiments::error_profile(&r.map, &cfg).map_err(|e| match e {
        lss_core::Error::NoAnalyticDirection(_) => CliError::Usage(e.to_string()),
        other => other.into(),
    })?;
    let text = match r.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&profile)?,
        Format::Csv => to_csv(&profile.rows())?,
    };
    emit(r.output.as_deref(), &text, stdout)
}

fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let r = resolve(&args.map, &args.common)?;
    let cfg = SweepConfig {
        s_values: list_or(&args.s_list, &r.file.s_list, &[0.9, 1.0, 1.1]),
        n: args.n.or(r.file.n).unwrap_or(1000),
        n0: r.n0,
        reps: args.reps.or(r.file.reps).unwrap_or(4),
        seed: r.seed,
        trim: args.trim.or(r.file.trim).unwrap_or(0),
        fd: FdSettings {
            ds: args.ds.or(r.file.ds).unwrap_or(FdConfig::DEFAULT_DS),
            ensemble: args.ensemble.or(r.file.ensemble).unwrap_or(1000),
            n: args.fd_n.or(r.file.fd_n).unwrap_or(5000),
            n0: args.fd_n0.or(r.file.fd_n0).unwrap_or(r.n0),
        },
    };
    cfg.validate()?;
    let jobs = args.jobs.or(r.file.jobs).unwrap_or(1);
    let rows = experiments::sweep(&r.map, &cfg, jobs)?;
    let text = match r.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&rows)?,
        Format::Csv => to_csv(&rows)?,
    };
    emit(r.output.as_deref(), &text, stdout)
}

/// `runs/conv.csv` -> `runs/conv-mean.csv`
pub fn companion_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match output.extension() {
        Some(ext) => format!("{stem}-mean.{}", ext.to_string_lossy()),
        None => format!("{stem}-mean"),
    };
    output.with_file_name(name)
}

fn cmd_converge(args: &ConvergeArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let r = resolve(&args.map, &args.common)?;
    let s = r.s.unwrap_or(1.0);
    let truth = match args.truth.or(r.file.truth).or_else(|| default_truth(&r.map_name, s)) {
        Some(t) => t,
        None => {
            return Err(CliError::Usage(format!(
                "no reference value known for {} at s = {s}; pass --truth",
                r.map_name
            )))
        }
    };
    let range_texts = list_or(&args.fit_range, &r.file.fit_range, &[]);
    let fit_ranges = range_texts
        .iter()
        .map(|t| parse_fit_range(t))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::Usage)?;
    let cfg = ConvergenceConfig {
        s,
        n_list: list_or(&args.n_list, &r.file.n_list, &[100, 200, 400, 800]),
        reps: args.reps.or(r.file.reps).unwrap_or(16),
        truth,
        trim: args.trim.or(r.file.trim).unwrap_or(20),
        n0: r.n0,
        seed: r.seed,
        fit_ranges,
    };
    cfg.validate()?;
    let jobs = args.jobs.or(r.file.jobs).unwrap_or(1);
    let study = experiments::convergence_study(&r.map, &cfg, jobs)?;
    let summary = ConvergeSummary {
        map: r.map_name.clone(),
        s,
        truth,
        reps: cfg.reps,
        trim: cfg.trim,
        n0: cfg.n0,
        seed: cfg.seed,
        fits: study.fits.clone(),
    };

    let format = r.format.unwrap_or(Format::Csv);
    if format == Format::Json {
        #[derive(Serialize)]
        struct Full<'a> {
            #[serde(flatten)]
            summary: &'a ConvergeSummary,
            rows: &'a [experiments::ConvergenceRow],
            means: &'a [experiments::MeanErrorRow],
        }
        let text = to_json(&Full { summary: &summary, rows: &study.rows, means: &study.means })?;
        return emit(r.output.as_deref(), &text, stdout);
    }

    emit(r.output.as_deref(), &to_csv(&study.rows)?, stdout)?;
    let mean_path = args
        .mean_output
        .clone()
        .or_else(|| r.file.mean_output.clone())
        .or_else(|| r.output.as_deref().map(companion_path));
    if let Some(path) = mean_path {
        std::fs::write(path, to_csv(&study.means)?)?;
    }
    let text = to_json(&summary)?;
    if r.output.is_some() {
        stdout.write_all(text.as_bytes())?;
    } else {
        stderr.write_all(text.as_bytes())?;
    }
    Ok(())
}

fn cmd_verify(args: &VerifyArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let r = resolve(&args.map, &args.common)?;
    let s = r.s.unwrap_or(1.0);
    let points = args.points.or(r.file.points).unwrap_or(100);
    let h = args.h.or(r.file.h).unwrap_or(1e-6);
    let report = verify_on_attractor(&r.map, s, points, h, r.seed)?;
    let record = VerifyRecord {
        map: r.map_name,
        s,
        points,
        h,
        seed: r.seed,
        max_rel_err_jac: report.max_rel_err_jac,
        max_rel_err_paramderiv: report.max_rel_err_paramderiv,
        max_rel_err_objgrad: report.max_rel_err_objgrad,
    };
    emit(r.output.as_deref(), &to_json(&record)?, stdout)
}

pub fn dispatch(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Run(a) => cmd_run(a, stdout),
        Command::Fd(a) => cmd_fd(a, stdout),
        Command::ErrProfile(a) => cmd_err_profile(a, stdout),
        Command::Sweep(a) => cmd_sweep(a, stdout),
        Command::Converge(a) => cmd_converge(a, stdout, stderr),
        Command::Verify(a) => cmd_verify(a, stdout),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = stderr.write_all(text.as_bytes());
            } else {
                let _ = stdout.write_all(text.as_bytes());
            }
            return e.exit_code();
        }
    };
    match dispatch(&cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut full = vec!["lss"];
        full.extend_from_slice(args);
        let code = main_with(full, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn unknown_map_is_usage_error() {
        let (code, _, err) = run(&["run", "--map", "nosuch", "--s", "1.0", "--n", "10"]);
        assert_eq!(code, 2);
        assert!(err.contains("nosuch"), "{err}");
    }

    #[test]
    fn invalid_numbers_are_usage_errors() {
        assert_eq!(run(&["run", "--map", "affine", "--n", "1"]).0, 2);
        assert_eq!(run(&["run", "--map", "affine", "--n", "10", "--trim", "5"]).0, 2);
        assert_eq!(run(&["fd", "--map", "cat", "--ensemble", "1"]).0, 2);
        assert_eq!(run(&["run", "--n", "ten"]).0, 2);
        assert_eq!(run(&["converge", "--map", "solenoid", "--s", "1.3"]).0, 2);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run(&["--help"]);
        assert_eq!(code, 0);
        for sub in ["run", "fd", "err-profile", "sweep", "converge", "verify"] {
            assert!(out.contains(sub), "{sub} missing from help");
        }
    }

    #[test]
    fn companion_naming() {
        assert_eq!(companion_path(Path::new("a/conv.csv")), PathBuf::from("a/conv-mean.csv"));
        assert_eq!(companion_path(Path::new("conv")), PathBuf::from("conv-mean"));
    }
}
