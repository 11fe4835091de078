//! `ccftest` — estimate cross-correlation function curves from paired
//! time-series sessions and compare groups of curves with integrated and
//! maximum Hotelling-type global tests.
//!
//! Subcommands:
//! - `test`     run one or more factor-query comparisons and write reports
//! - `simulate` emit a synthetic dataset from a scenario JSON
//! - `ccf`      export one session's CCF curve as plot data
//!
//! Results go to files; warnings and diagnostics go to standard error.
//! Exit codes: 1 I/O failure, 2 validation failure, 3 degenerate
//! statistics.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;

use ccftest::ccf::CovDivisor;
use ccftest::error::{Error, ErrorClass};
use ccftest::pipeline::{
    run_comparison, write_curve_csv, write_pointwise_csv, write_results_csv, ComparisonConfig,
    Dataset, FactorQuery, TestReport,
};
use ccftest::scenario::Scenario;
use ccftest::seed::derive_seed;
use ccftest::{LagGrid, Quadrature};

#[derive(Parser)]
#[command(name = "ccftest", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run group comparisons and write TestReport JSON, a combined results
    /// CSV, and pointwise-curve CSVs.
    Test(TestArgs),
    /// Generate a synthetic dataset (manifest + session CSVs) from a
    /// scenario JSON.
    Simulate(SimulateArgs),
    /// Export one session's CCF curve as `lag_seconds,rho` CSV.
    Ccf(CcfArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Manifest CSV: session_id,file,sample_rate_hz,region,sex,condition
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Lag window start in seconds
    #[arg(long)]
    a: Option<f64>,
    /// Lag window end in seconds
    #[arg(long)]
    b: Option<f64>,
    /// Number of lag grid points
    #[arg(long)]
    grid_size: Option<usize>,
    /// Session time window `start,end` in the session file's t units
    #[arg(long, value_parser = parse_window)]
    window: Option<(f64, f64)>,
    /// Cross-covariance divisor convention
    #[arg(long, value_parser = parse_divisor)]
    divisor: Option<CovDivisor>,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// JSON config file; command-line flags are applied last and win
    #[arg(long)]
    config: Option<PathBuf>,
    /// Factor query, e.g. "region=NAc vs DS" or "sex=F vs M | region=NAc";
    /// repeatable
    #[arg(long = "comparison")]
    comparisons: Vec<String>,
    /// Comma-separated measure list
    #[arg(long, value_delimiter = ',')]
    measures: Vec<String>,
    /// Significance level used in the stderr summary
    #[arg(long)]
    alpha: Option<f64>,
    /// Bootstrap replicates for F_max
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Permutation replicates for the cross-check (0 = off)
    #[arg(long)]
    permutation: Option<usize>,
    /// Root seed; all sub-seeds derive from it
    #[arg(long)]
    seed: Option<u64>,
    /// Quadrature for F_int: trapezoid or riemann
    #[arg(long, value_parser = parse_quadrature)]
    quadrature: Option<Quadrature>,
    /// Output directory (default: $CCFTEST_OUT_DIR or the working directory)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON
    #[arg(long)]
    spec: PathBuf,
    /// Output directory for manifest.csv and session files
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CcfArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Session id from the manifest
    #[arg(long)]
    session: String,
    /// Measure name (velocity, accel_signed, accel_abs, dopamine)
    #[arg(long)]
    measure: String,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

/// Optional fields mirroring the flags; flags override file values.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    manifest: Option<PathBuf>,
    a: Option<f64>,
    b: Option<f64>,
    grid_size: Option<usize>,
    measures: Option<Vec<String>>,
    comparisons: Option<Vec<String>>,
    alpha: Option<f64>,
    bootstrap_b: Option<usize>,
    permutation_r: Option<usize>,
    seed: Option<u64>,
    quadrature: Option<Quadrature>,
    divisor: Option<CovDivisor>,
    window: Option<(f64, f64)>,
    out_dir: Option<PathBuf>,
}

/// Fully resolved run configuration.
struct RunConfig {
    manifest: PathBuf,
    grid: LagGrid,
    measures: Vec<String>,
    comparisons: Vec<String>,
    alpha: f64,
    bootstrap_b: usize,
    permutation_r: usize,
    seed: u64,
    quadrature: Quadrature,
    divisor: CovDivisor,
    window: Option<(f64, f64)>,
    out_dir: PathBuf,
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `start,end`")?;
    let a: f64 = a.trim().parse().map_err(|_| "bad start")?;
    let b: f64 = b.trim().parse().map_err(|_| "bad end")?;
    if a >= b {
        return Err("window start must precede end".to_string());
    }
    Ok((a, b))
}

fn parse_quadrature(s: &str) -> Result<Quadrature, String> {
    match s {
        "trapezoid" => Ok(Quadrature::Trapezoid),
        "riemann" => Ok(Quadrature::Riemann),
        _ => Err("expected `trapezoid` or `riemann`".to_string()),
    }
}

fn parse_divisor(s: &str) -> Result<CovDivisor, String> {
    match s {
        "full_length" => Ok(CovDivisor::FullLength),
        "per_lag" => Ok(CovDivisor::PerLag),
        _ => Err("expected `full_length` or `per_lag`".to_string()),
    }
}

fn default_out_dir() -> PathBuf {
    std::env::var_os("CCFTEST_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn resolve_config(args: &TestArgs) -> Result<RunConfig, Error> {
    let file: FileConfig = match &args.config {
        None => FileConfig::default(),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            serde_json::from_str(&text)?
        }
    };
    let manifest = args
        .common
        .manifest
        .clone()
        .or(file.manifest)
        .ok_or(Error::NothingToDo("no manifest given"))?;
    let a = args.common.a.or(file.a).unwrap_or(-1.0);
    let b = args.common.b.or(file.b).unwrap_or(1.0);
    let m = args.common.grid_size.or(file.grid_size).unwrap_or(41);
    let measures = if args.measures.is_empty() {
        file.measures
            .unwrap_or_else(|| vec!["velocity".to_string(), "accel_signed".to_string()])
    } else {
        args.measures.clone()
    };
    let comparisons = if args.comparisons.is_empty() {
        file.comparisons.unwrap_or_default()
    } else {
        args.comparisons.clone()
    };
    Ok(RunConfig {
        manifest,
        grid: LagGrid::new(a, b, m)?,
        measures,
        comparisons,
        alpha: args.alpha.or(file.alpha).unwrap_or(0.05),
        bootstrap_b: args.bootstrap.or(file.bootstrap_b).unwrap_or(1000),
        permutation_r: args.permutation.or(file.permutation_r).unwrap_or(0),
        seed: args.seed.or(file.seed).unwrap_or(0),
        quadrature: args
            .quadrature
            .or(file.quadrature)
            .unwrap_or(Quadrature::Trapezoid),
        divisor: args
            .common
            .divisor
            .or(file.divisor)
            .unwrap_or(CovDivisor::FullLength),
        window: args.common.window.or(file.window),
        out_dir: args
            .out
            .clone()
            .or(file.out_dir)
            .unwrap_or_else(default_out_dir),
    })
}

fn slugify(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect::<String>()
        .split('_')
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

fn cmd_test(args: &TestArgs) -> Result<(), Error> {
    let cfg = resolve_config(args)?;
    if cfg.comparisons.is_empty() {
        return Err(Error::NothingToDo("no comparisons requested"));
    }
    let queries: Vec<FactorQuery> = cfg
        .comparisons
        .iter()
        .map(|c| c.parse())
        .collect::<Result<_, _>>()?;

    let dataset = Dataset::load(
        &cfg.manifest,
        &cfg.grid,
        &cfg.measures,
        cfg.window,
        cfg.divisor,
    )?;

    let reports: Vec<TestReport> = queries
        .par_iter()
        .enumerate()
        .map(|(i, query)| {
            let comparison_cfg = ComparisonConfig {
                bootstrap_b: cfg.bootstrap_b,
                permutation_r: cfg.permutation_r,
                seed: derive_seed(cfg.seed, "comparison", i as u64),
                quadrature: cfg.quadrature,
                work_limit: None,
            };
            run_comparison(&dataset, query, &cfg.measures, &comparison_cfg)
        })
        .collect::<Result<_, _>>()?;

    fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Error::io(cfg.out_dir.display().to_string(), e))?;
    for (i, report) in reports.iter().enumerate() {
        let ratio = report.cov_trace_ratio;
        if !(0.25..=4.0).contains(&ratio) {
            eprintln!(
                "warning: `{}`: group covariance trace ratio {ratio:.3} is far from 1; \
                 the common-covariance assumption may be doubtful",
                report.comparison
            );
        }
        let stem = format!("{:02}_{}", i, slugify(&report.comparison));
        let json_path = cfg.out_dir.join(format!("{stem}.json"));
        fs::write(&json_path, report.to_json())
            .map_err(|e| Error::io(json_path.display().to_string(), e))?;
        let pw_path = cfg.out_dir.join(format!("{stem}_pointwise.csv"));
        let mut buf = Vec::new();
        write_pointwise_csv(&mut buf, &report.pointwise)
            .map_err(|e| Error::io(pw_path.display().to_string(), e))?;
        fs::write(&pw_path, buf).map_err(|e| Error::io(pw_path.display().to_string(), e))?;
        let verdict = |p: f64| if p < cfg.alpha { "reject" } else { "retain" };
        eprintln!(
            "{}: F_int={:.4} p={:.4} ({}) F_max={:.4} p={:.4} ({})",
            report.comparison,
            report.f_int,
            report.p_int,
            verdict(report.p_int),
            report.f_max,
            report.p_max,
            verdict(report.p_max),
        );
    }
    let results_path = cfg.out_dir.join("results.csv");
    let mut buf = Vec::new();
    write_results_csv(&mut buf, &reports)
        .map_err(|e| Error::io(results_path.display().to_string(), e))?;
    fs::write(&results_path, buf)
        .map_err(|e| Error::io(results_path.display().to_string(), e))?;
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Error> {
    let scenario = Scenario::from_path(&args.spec)?;
    let out = args.out.clone().unwrap_or_else(default_out_dir);
    let manifest = scenario.emit(&out)?;
    eprintln!("wrote {}", manifest.display());
    Ok(())
}

fn cmd_ccf(args: &CcfArgs) -> Result<(), Error> {
    let manifest = args
        .common
        .manifest
        .clone()
        .ok_or(Error::NothingToDo("no manifest given"))?;
    let grid = LagGrid::new(
        args.common.a.unwrap_or(-1.0),
        args.common.b.unwrap_or(1.0),
        args.common.grid_size.unwrap_or(41),
    )?;
    let divisor = args.common.divisor.unwrap_or(CovDivisor::FullLength);
    let dataset = Dataset::load(
        &manifest,
        &grid,
        std::slice::from_ref(&args.measure),
        args.common.window,
        divisor,
    )?;
    let curve = dataset.curve(&args.session, &args.measure)?;
    let mut buf = Vec::new();
    write_curve_csv(&mut buf, &curve)
        .map_err(|e| Error::io(args.out.display().to_string(), e))?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    fs::write(&args.out, buf).map_err(|e| Error::io(args.out.display().to_string(), e))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Test(args) => cmd_test(args),
        Cmd::Simulate(args) => cmd_simulate(args),
        Cmd::Ccf(args) => cmd_ccf(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e.class() {
                ErrorClass::Io => ExitCode::from(1),
                ErrorClass::Validation => ExitCode::from(2),
                ErrorClass::Degenerate => ExitCode::from(3),
            }
        }
    }
}
