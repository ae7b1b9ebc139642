//! `tdrr`: estimate structural dimensions and factor counts from CSV data,
//! reproduce simulation tables, and score kernel fits.
//!
//! Exit codes: 0 success, 2 input error, 3 numeric or estimator error.

mod dataset;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tdrr_core::criteria::{apply, Criterion, DimensionEstimate, Overrides, SpectrumContext};
use tdrr_core::factor::{factor_spectrum, PanelMatrix};
use tdrr_core::harness::{fmt_f64, parse_config, run_experiment};
use tdrr_core::kernel_fit::{
    bandwidth_grid, bandwidth_rule, best_by, nw_fit, rss, score_bandwidths, ProjectedDesign,
};
use tdrr_core::sdr::{estimate_target, SdrMethod, DEFAULT_SLICES};
use tdrr_core::spectra::{zscore_columns, DataMatrix, ResponseVector};
use tdrr_core::Error;

use dataset::{CsvDataset, ParseError};

#[derive(Parser)]
#[command(name = "tdrr", version, about = "Dimension and factor-number determination from eigenvalue spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Structural dimension of a regression (SIR or DEE-SIR target).
    EstimateDim(EstimateDim),
    /// Number of common factors in a panel.
    EstimateFactors(EstimateFactors),
    /// Monte Carlo frequency table from a config file.
    Simulate(Simulate),
    /// Kernel fit on the leading directions and its RSS.
    FitRss(FitRss),
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Sir,
    Dee,
}

impl EstimatorArg {
    fn method(self, slices: usize) -> SdrMethod {
        match self {
            EstimatorArg::Sir => SdrMethod::Sir { slices },
            EstimatorArg::Dee => SdrMethod::DeeSir,
        }
    }
}

#[derive(Args)]
struct OverrideArgs {
    /// First-round TDRR ridge.
    #[arg(long)]
    c1: Option<f64>,
    /// Second-round TDRR ridge.
    #[arg(long)]
    c2: Option<f64>,
    /// TDRR threshold.
    #[arg(long)]
    tau: Option<f64>,
    /// RRE ridge.
    #[arg(long)]
    rre_c: Option<f64>,
    /// BIC penalty.
    #[arg(long)]
    alpha_n: Option<f64>,
    /// Largest index RE searches.
    #[arg(long)]
    d_max: Option<usize>,
    /// Sequential test level.
    #[arg(long)]
    level: Option<f64>,
}

impl OverrideArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            c1: self.c1,
            c2: self.c2,
            tau: self.tau,
            rre_c: self.rre_c,
            alpha_n: self.alpha_n,
            d_max: self.d_max,
            level: self.level,
        }
    }
}

#[derive(Args)]
struct EstimateDim {
    #[arg(long)]
    input: PathBuf,
    /// Response column name; every other column is a covariate.
    #[arg(long)]
    response: String,
    #[arg(long, value_enum, default_value = "dee")]
    estimator: EstimatorArg,
    #[arg(long, default_value_t = DEFAULT_SLICES)]
    slices: usize,
    /// Comma-separated subset of tdrr, rre, re, bic, st.
    #[arg(long, default_value = "tdrr,rre,re,bic")]
    methods: String,
    #[command(flatten)]
    overrides: OverrideArgs,
    /// Z-score the covariates first.
    #[arg(long)]
    standardize: bool,
    /// Write every criterion's trace as CSV (method, round, index, value).
    #[arg(long)]
    emit_trace: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateFactors {
    #[arg(long)]
    input: PathBuf,
    /// Treat each CSV row as a series (default: each column is a series and
    /// each row an observation).
    #[arg(long)]
    series_in_rows: bool,
    /// Remove each series' mean.
    #[arg(long)]
    demean: bool,
    #[arg(long, default_value = "tdrr,rre,re,bic")]
    methods: String,
    #[command(flatten)]
    overrides: OverrideArgs,
    /// How many leading eigenvalues to print.
    #[arg(long, default_value_t = 30)]
    top: usize,
    #[arg(long)]
    emit_trace: Option<PathBuf>,
}

#[derive(Args)]
struct Simulate {
    #[arg(long)]
    config: PathBuf,
    /// Writes PREFIX.csv and PREFIX.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct FitRss {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    response: String,
    /// Number of leading directions.
    #[arg(long)]
    q: usize,
    #[arg(long, value_enum, default_value = "dee")]
    estimator: EstimatorArg,
    #[arg(long, default_value_t = DEFAULT_SLICES)]
    slices: usize,
    #[arg(long)]
    standardize: bool,
    /// Fixed bandwidth (default: n^{-1/(4+q)}/4).
    #[arg(long, conflicts_with_all = ["grid", "cv"])]
    bandwidth: Option<f64>,
    /// Scan the l/20 grid and report the smallest in-sample RSS.
    #[arg(long)]
    grid: bool,
    /// Scan the grid and pick the bandwidth by leave-one-out RSS.
    #[arg(long)]
    cv: bool,
    /// Use l = 1..=20 instead of l = 2..=19.
    #[arg(long)]
    full_grid: bool,
}

enum Failure {
    Input(String),
    Numeric(String),
}

impl From<ParseError> for Failure {
    fn from(e: ParseError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. }
            | Error::InvalidArgument(_)
            | Error::NonFinite { .. }
            | Error::DimensionMismatch(_)
            | Error::DegenerateInput(_) => Failure::Input(e.to_string()),
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::EstimateDim(a) => estimate_dim(a),
        Command::EstimateFactors(a) => estimate_factors(a),
        Command::Simulate(a) => simulate(a),
        Command::FitRss(a) => fit_rss(a),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}

fn load_xy(input: &Path, response: &str, standardize: bool) -> Result<(DataMatrix, ResponseVector), Failure> {
    let ds = CsvDataset::read(input)?;
    let (x, y, _) = ds
        .split_response(response)
        .ok_or_else(|| Failure::Input(format!("{}: no column named `{response}`", input.display())))?;
    if x.ncols() == 0 {
        return Err(Failure::Input("no covariate columns besides the response".into()));
    }
    let x = DataMatrix::new(x)?;
    let x = if standardize { zscore_columns(&x) } else { x };
    Ok((x, ResponseVector::new(y)?))
}

fn parse_methods(list: &str) -> Result<Vec<Criterion>, Failure> {
    Criterion::parse_list(list).map_err(|e| Failure::Input(format!("--methods: {e}")))
}

fn trace_csv(estimates: &[DimensionEstimate]) -> String {
    let mut out = String::from("method,round,index,value\n");
    for e in estimates {
        for (round, index, value) in e.trace.rows() {
            let _ = writeln!(out, "{},{round},{index},{}", e.method, fmt_f64(value));
        }
    }
    out
}

fn report_estimates(out: &mut String, estimates: &[DimensionEstimate]) {
    for e in estimates {
        let _ = write!(out, "{:<5} q_hat = {}", e.method.name(), e.q_hat);
        if e.empty_qualifying {
            out.push_str("  (no ratio below tau)");
        }
        out.push('\n');
    }
    for e in estimates {
        let _ = writeln!(out, "\n[{}]\nround         index  value", e.method.name());
        for (round, index, value) in e.trace.rows() {
            let _ = writeln!(out, "{round:<13} {index:>5}  {value:.6}");
        }
    }
}

fn run_methods(
    methods: &[Criterion],
    spec: &tdrr_core::EigenSpectrum,
    ctx: SpectrumContext,
    overrides: &Overrides,
) -> Result<Vec<DimensionEstimate>, Failure> {
    methods
        .iter()
        .map(|&m| apply(m, spec, ctx, overrides).map_err(|e| Failure::Numeric(format!("{m}: {e}"))))
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn estimate_dim(a: &EstimateDim) -> Result<String, Failure> {
    let methods = parse_methods(&a.methods)?;
    let (x, y) = load_xy(&a.input, &a.response, a.standardize)?;
    let method = a.estimator.method(a.slices);
    let target = estimate_target(&x, &y, method)?;
    let slices = matches!(method, SdrMethod::Sir { .. }).then_some(a.slices);
    let estimates = run_methods(
        &methods,
        &target.spectrum,
        SpectrumContext::Sdr { slices },
        &a.overrides.overrides(),
    )?;

    let mut out = String::new();
    let _ = writeln!(out, "estimator: {method}  n = {}  p = {}", x.nrows(), x.ncols());
    if target.regularized {
        out.push_str("note: covariate covariance was near singular; a small ridge was added\n");
    }
    out.push_str("eigenvalues:");
    for v in target.spectrum.values() {
        let _ = write!(out, " {v:.4}");
    }
    out.push_str("\n\n");
    report_estimates(&mut out, &estimates);
    if let Some(path) = &a.emit_trace {
        write_file(path, &trace_csv(&estimates))?;
    }
    Ok(out)
}

fn estimate_factors(a: &EstimateFactors) -> Result<String, Failure> {
    let methods = parse_methods(&a.methods)?;
    let ds = CsvDataset::read(&a.input)?;
    let y = if a.series_in_rows {
        ds.data
    } else {
        ds.data.transpose()
    };
    let mut panel = PanelMatrix::new(y)?;
    if a.demean {
        panel = panel.demeaned();
    }
    let spec = factor_spectrum(&panel)?;
    let estimates = run_methods(&methods, &spec, SpectrumContext::Factor, &a.overrides.overrides())?;

    let mut out = String::new();
    let _ = writeln!(out, "panel: p = {} series, n = {} observations", panel.p(), panel.n());
    let _ = write!(out, "leading eigenvalues (first {}):", a.top.min(spec.p()));
    for v in spec.values().iter().take(a.top) {
        let _ = write!(out, " {v:.4}");
    }
    out.push_str("\n\n");
    report_estimates(&mut out, &estimates);
    if let Some(path) = &a.emit_trace {
        write_file(path, &trace_csv(&estimates))?;
    }
    Ok(out)
}

fn simulate(a: &Simulate) -> Result<String, Failure> {
    let text = std::fs::read_to_string(&a.config).map_err(|e| io_failure(&a.config, e))?;
    let cfg = parse_config(&text)?;
    let start = Instant::now();
    let report = run_experiment(&cfg, a.threads)?;
    eprintln!(
        "{} replications in {:.2} s",
        cfg.replications,
        start.elapsed().as_secs_f64()
    );
    let csv_path = a.out.with_extension("csv");
    let json_path = a.out.with_extension("json");
    let csv = report.to_csv();
    write_file(&csv_path, &csv)?;
    write_file(&json_path, &report.to_json())?;
    Ok(csv)
}

fn fit_rss(a: &FitRss) -> Result<String, Failure> {
    let (x, y) = load_xy(&a.input, &a.response, a.standardize)?;
    if a.q == 0 || a.q > x.ncols() {
        return Err(Failure::Input(format!("--q must be in 1..={}, got {}", x.ncols(), a.q)));
    }
    let target = estimate_target(&x, &y, a.estimator.method(a.slices))?;
    let proj = ProjectedDesign::from_target(&target, &x, a.q)?;
    let mut out = String::new();
    let _ = writeln!(out, "q = {}  n = {}", a.q, x.nrows());

    if a.grid || a.cv {
        let scores = score_bandwidths(&proj, &y, &bandwidth_grid(a.full_grid))?;
        out.push_str("h        rss          cv_rss\n");
        for s in &scores {
            let _ = writeln!(out, "{:<8} {:<12.6} {:.6}", fmt_f64(s.h), s.rss, s.cv);
        }
        let best = if a.cv {
            best_by(&scores, |s| s.cv)
        } else {
            best_by(&scores, |s| s.rss)
        }
        .expect("grid is nonempty");
        let label = if a.cv { "cv" } else { "grid" };
        let _ = writeln!(out, "best ({label}): h = {}  rss = {:.6}  cv_rss = {:.6}", fmt_f64(best.h), best.rss, best.cv);
    } else {
        let h = a.bandwidth.unwrap_or_else(|| bandwidth_rule(x.nrows(), a.q));
        let fit = nw_fit(&proj, &y, h, false)?;
        let value = rss(&fit.fitted, y.values())?;
        let fallback = fit.fallback.iter().filter(|b| **b).count();
        let _ = writeln!(out, "h = {h:.6}  rss = {value:.6}");
        if fallback > 0 {
            let _ = writeln!(out, "note: {fallback} points had no neighbours and used the global mean");
        }
    }
    Ok(out)
}
