//! Command-line front end: load -> (normalize) -> fit/select -> diagnose ->
//! report.
//!
//! Exit codes: 0 success, 2 usage error, 1 runtime error. Diagnostics go to
//! stderr; the report goes to `--output` (stdout when omitted).

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use carclust_core::synth::{GeneratedPanel, SyntheticSpec};
use carclust_core::{
    between_scatter, ch_index, within_scatter, CHReport, CarError, ChCandidate, FitConfig,
    FitResult, InitStrategy, LongitudinalPanel, Mat, VarCoefficients,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::csv_io::{load_panel, write_panel_file, DataError};
use crate::driver;
use crate::report::{build_report, render, write_report_file, ConfigEcho, Report, ReportFormat};

#[derive(Parser, Debug)]
#[command(
    name = "carclust",
    version,
    about = "Time-varying K-means clustering of longitudinal panels with autoregressive centroid dynamics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the model at a fixed cluster count and write a report.
    Fit(FitArgs),
    /// Sweep a cluster-count range, score each fit, report all candidates.
    Select(SelectArgs),
    /// Generate a synthetic panel (plus ground truth) to CSV.
    Simulate(SimulateArgs),
    /// Check a panel CSV without fitting.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InitArg {
    Random,
    Slicewise,
    Mixed,
}

impl From<InitArg> for InitStrategy {
    fn from(value: InitArg) -> Self {
        match value {
            InitArg::Random => InitStrategy::RandomPartition,
            InitArg::Slicewise => InitStrategy::SlicewiseKMeans,
            InitArg::Mixed => InitStrategy::Mixed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Text,
    Tree,
}

impl From<FormatArg> for ReportFormat {
    fn from(value: FormatArg) -> Self {
        match value {
            FormatArg::Text => ReportFormat::Text,
            FormatArg::Tree => ReportFormat::Tree,
        }
    }
}

/// `G` or inclusive `A..B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ClustersArg {
    Single(usize),
    Range(usize, usize),
}

impl FromStr for ClustersArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some((lo, hi)) = s.split_once("..") {
            let lo: usize = lo
                .parse()
                .map_err(|_| format!("`{lo}` is not a cluster count"))?;
            let hi: usize = hi
                .parse()
                .map_err(|_| format!("`{hi}` is not a cluster count"))?;
            if hi < lo {
                return Err(format!("range {lo}..{hi} is empty; write it low..high"));
            }
            Ok(ClustersArg::Range(lo, hi))
        } else {
            let g: usize = s
                .parse()
                .map_err(|_| format!("`{s}` is not a cluster count"))?;
            Ok(ClustersArg::Single(g))
        }
    }
}

impl std::fmt::Display for ClustersArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClustersArg::Single(g) => write!(f, "{g}"),
            ClustersArg::Range(lo, hi) => write!(f, "{lo}..{hi}"),
        }
    }
}

#[derive(Args, Debug)]
struct CommonFitArgs {
    /// Panel CSV (`unit,time,<vars...>`).
    #[arg(long)]
    input: PathBuf,
    /// Cluster count `G` (fit) or inclusive range `A..B` (select).
    #[arg(long)]
    clusters: ClustersArg,
    /// Autoregressive lag order.
    #[arg(long, default_value_t = 1)]
    lags: usize,
    /// Independent restarts per fit.
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative objective decrease that stops the descent.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Min-max rescale every variable onto [0, 1] before fitting.
    #[arg(long)]
    normalize: bool,
    #[arg(long, value_enum, default_value_t = InitArg::Mixed)]
    init: InitArg,
    /// Report destination (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    common: CommonFitArgs,
    /// Permit the degenerate single-cluster fit.
    #[arg(long)]
    allow_trivial: bool,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[command(flatten)]
    common: CommonFitArgs,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value_t = 90)]
    units: usize,
    #[arg(long, default_value_t = 2)]
    vars: usize,
    #[arg(long, default_value_t = 8)]
    times: usize,
    #[arg(long, default_value_t = 3)]
    clusters: usize,
    #[arg(long, default_value_t = 1)]
    lags: usize,
    /// Gaussian scale of centroid innovations and observation noise.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Per unit-time probability of resampling the membership.
    #[arg(long, default_value_t = 0.02)]
    switch_prob: f64,
    /// Spacing of the initial centroids.
    #[arg(long, default_value_t = 0.6)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Panel CSV destination.
    #[arg(long)]
    output: PathBuf,
    /// Ground-truth JSON destination (default: `<output>.truth.json`).
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    input: PathBuf,
}

/// A usage problem (exit 2) or a runtime failure (exit 1).
enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<CarError> for CliError {
    fn from(e: CarError) -> Self {
        match e {
            // Configuration mistakes come from flag values.
            CarError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Runs the CLI on `argv` and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.exit_code() == 0 { 0 } else { 2 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Fit(args) => run_fit(args),
        Command::Select(args) => run_select(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Validate(args) => run_validate(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            2
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn load_input(common: &CommonFitArgs) -> Result<LongitudinalPanel, CliError> {
    let panel = load_panel(&common.input)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", common.input.display())))?;
    if common.normalize {
        Ok(carclust_core::normalize::minmax_normalize(&panel)?)
    } else {
        Ok(panel)
    }
}

fn fit_config(common: &CommonFitArgs, g: usize) -> FitConfig {
    FitConfig {
        n_clusters: g,
        lag_order: common.lags,
        n_restarts: common.restarts,
        max_iters: common.max_iters,
        rel_tol: common.tol,
        seed: common.seed,
        init_strategy: common.init.into(),
    }
}

fn config_echo(command: &str, common: &CommonFitArgs) -> ConfigEcho {
    ConfigEcho {
        command: command.to_string(),
        input: common.input.display().to_string(),
        clusters: common.clusters.to_string(),
        lags: common.lags,
        restarts: common.restarts,
        seed: common.seed,
        tol: common.tol,
        max_iters: common.max_iters,
        normalize: common.normalize,
        init: format!("{:?}", common.init).to_lowercase(),
    }
}

fn emit(report: &Report, common: &CommonFitArgs) -> Result<(), CliError> {
    match &common.output {
        Some(path) => {
            write_report_file(report, path, common.format.into())
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            eprintln!("report written to {}", path.display());
        }
        None => {
            print!("{}", render(report, common.format.into()));
        }
    }
    Ok(())
}

/// Index evaluation of a finished fit at fixed G, shown in the fit report's
/// selection table.
fn singleton_ch(panel: &LongitudinalPanel, fit: &FitResult) -> Result<Option<CHReport>, CarError> {
    if fit.partition.n_clusters() < 2 {
        return Ok(None);
    }
    let tw = within_scatter(panel, &fit.partition)?.trace();
    let tb = between_scatter(panel, &fit.partition)?.trace();
    let ch = ch_index(panel, &fit.partition)?;
    Ok(Some(CHReport {
        candidates: vec![ChCandidate {
            g: fit.partition.n_clusters(),
            ch_value: ch,
            objective: fit.objective,
            trace_w: tw,
            trace_b: tb,
            iterations: fit.iterations,
            converged: fit.converged,
            restart_index: fit.restart_index,
        }],
        failures: Vec::new(),
        selected_g: fit.partition.n_clusters(),
    }))
}

fn run_fit(args: FitArgs) -> Result<(), CliError> {
    let g = match args.common.clusters {
        ClustersArg::Single(g) => g,
        ClustersArg::Range(_, _) => {
            return Err(CliError::Usage(
                "`fit` takes a single cluster count; use `select` for a range".into(),
            ))
        }
    };
    if g < 2 && !args.allow_trivial {
        return Err(CliError::Usage(
            "a single-cluster fit is degenerate; pass --allow-trivial to run it anyway".into(),
        ));
    }
    let panel = load_input(&args.common)?;
    let config = fit_config(&args.common, g);
    config.validate(&panel)?;
    let threads = driver::thread_cap();
    eprintln!(
        "fitting {} clusters, lag {}, {} restarts ({} threads)",
        g, config.lag_order, config.n_restarts, threads
    );
    let fit = driver::multistart(&panel, &config, threads)?;
    let ch = singleton_ch(&panel, &fit)?;
    let report = build_report(&panel, &fit, ch.as_ref(), config_echo("fit", &args.common))?;
    emit(&report, &args.common)
}

fn run_select(args: SelectArgs) -> Result<(), CliError> {
    let (lo, hi) = match args.common.clusters {
        ClustersArg::Range(lo, hi) => (lo, hi),
        ClustersArg::Single(g) => (g, g),
    };
    if lo < 2 {
        return Err(CliError::Usage(
            "the selection range must start at 2 (a single cluster has no index value)".into(),
        ));
    }
    let panel = load_input(&args.common)?;
    let base = fit_config(&args.common, lo);
    let threads = driver::thread_cap();
    eprintln!(
        "sweeping clusters {lo}..{hi}, lag {}, {} restarts each ({} threads)",
        base.lag_order, base.n_restarts, threads
    );
    let (report, winner) = driver::select(&panel, lo..=hi, &base, threads)?;
    eprintln!("selected {} clusters", report.selected_g);
    let out = build_report(
        &panel,
        &winner,
        Some(&report),
        config_echo("select", &args.common),
    )?;
    emit(&out, &args.common)
}

#[derive(Serialize)]
struct TruthFile {
    seed: u64,
    clusters: usize,
    lags: usize,
    noise: f64,
    switch_prob: f64,
    /// `labels[time][unit]`, 1-based cluster labels.
    labels: Vec<Vec<usize>>,
    intercept: Vec<f64>,
    lag_matrices: Vec<Vec<Vec<f64>>>,
    /// `centroids[time][cluster][variable]` simulated paths.
    centroids: Vec<Vec<Vec<f64>>>,
}

/// Deterministic generating law for `simulate`: stable diagonal-dominant
/// lags, a small upward drift, and initial centroids spread `separation`
/// apart along rotating axes.
fn simulate_spec(args: &SimulateArgs) -> Result<SyntheticSpec, CliError> {
    if args.vars == 0 {
        return Err(CliError::Usage("--vars must be at least 1".into()));
    }
    if args.lags == 0 {
        return Err(CliError::Usage("--lags must be at least 1".into()));
    }
    let j = args.vars;
    let mut lags = Vec::with_capacity(args.lags);
    for p in 0..args.lags {
        let weight = if p == 0 { 0.9 } else { 0.08 / p as f64 };
        lags.push(Mat::from_fn(j, j, |r, c| if r == c { weight } else { 0.0 }));
    }
    let coefficients =
        VarCoefficients::new(vec![0.01; j], lags).map_err(|e| CliError::Runtime(e.to_string()))?;
    let initial = Mat::from_fn(args.clusters, j, |g, v| {
        if v == g % j {
            args.separation * ((g / j) + 1) as f64
        } else {
            0.0
        }
    });
    Ok(SyntheticSpec {
        n_units: args.units,
        n_times: args.times,
        n_clusters: args.clusters,
        coefficients,
        initial_centroids: initial,
        noise_scale: args.noise,
        switch_prob: args.switch_prob,
        seed: args.seed,
        require_stationary: false,
    })
}

fn run_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let spec = simulate_spec(&args)?;
    let GeneratedPanel {
        panel,
        partition,
        coefficients,
        centroid_paths,
    } = carclust_core::synth::generate_panel(&spec)?;
    write_panel_file(&panel, &args.output)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.output.display())))?;
    let truth_path = args.truth.clone().unwrap_or_else(|| {
        let mut p = args.output.clone().into_os_string();
        p.push(".truth.json");
        PathBuf::from(p)
    });
    let j = coefficients.dim();
    let truth = TruthFile {
        seed: args.seed,
        clusters: args.clusters,
        lags: args.lags,
        noise: args.noise,
        switch_prob: args.switch_prob,
        labels: (0..panel.n_times())
            .map(|t| {
                (0..panel.n_units())
                    .map(|i| partition.label(i, t) + 1)
                    .collect()
            })
            .collect(),
        intercept: coefficients.intercept().to_vec(),
        lag_matrices: (0..coefficients.lag_order())
            .map(|p| {
                (0..j)
                    .map(|r| {
                        (0..j)
                            .map(|c| coefficients.lag_matrix(p).get(r, c))
                            .collect()
                    })
                    .collect()
            })
            .collect(),
        centroids: (0..centroid_paths.n_times())
            .map(|t| {
                (0..centroid_paths.n_clusters())
                    .map(|g| (0..j).map(|v| centroid_paths.value(g, v, t)).collect())
                    .collect()
            })
            .collect(),
    };
    let mut file = std::fs::File::create(&truth_path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", truth_path.display())))?;
    let mut body = serde_json::to_string_pretty(&truth).expect("truth serializes");
    body.push('\n');
    file.write_all(body.as_bytes())
        .map_err(|e| CliError::Runtime(format!("{}: {e}", truth_path.display())))?;
    eprintln!(
        "wrote {} ({} units x {} vars x {} times) and {}",
        args.output.display(),
        panel.n_units(),
        panel.n_vars(),
        panel.n_times(),
        truth_path.display()
    );
    Ok(())
}

fn run_validate(args: ValidateArgs) -> Result<(), CliError> {
    let panel = load_panel(&args.input)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.input.display())))?;
    println!(
        "{}: OK ({} units x {} variables x {} times)",
        args.input.display(),
        panel.n_units(),
        panel.n_vars(),
        panel.n_times()
    );
    println!(
        "variables: {} | times: {} .. {}",
        panel.var_names().join(", "),
        panel.time_points()[0],
        panel.time_points()[panel.n_times() - 1]
    );
    Ok(())
}
