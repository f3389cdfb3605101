//! Command-line front end: bounds, simulations, sweeps and the acceptance suite.

mod config;

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use stein_wilks::acceptance::{run_criterion, CRITERIA};
use stein_wilks::mc::{
    chisq_expectation, dimension_sweep, distance_from_statistics, ks_distance, rate_sweep,
    simulate_statistics, write_sweep_csv, McOptions, MIN_REPS,
};
use stein_wilks::{
    assemble_bound, exponential_corollary_bound, model_by_id, normal_corollary_bound,
    validate_test_function, BoundBreakdown, Covariates, Error, GridSpec, HNorms, MCEstimate,
    OracleSettings, ParametricModel, SweepRow, TestFunction,
};

/// Environment variable capping the number of worker threads.
const THREADS_ENV: &str = "STEIN_WILKS_THREADS";

#[derive(Parser, Debug)]
#[command(name = "stein-wilks", version, about = "Explicit chisquare bounds for likelihood ratio statistics")]
#[command(args_override_self = true)]
struct Cli {
    /// Flat key=value file supplying defaults for the command's flags
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate the bound for one configuration
    Bound(BoundArgs),
    /// Estimate |E h(-2 log Lambda) - E h(chisq_r)| by simulation
    Simulate(SimulateArgs),
    /// Bound totals over a grid of sample sizes
    RateSweep(RateSweepArgs),
    /// Logistic scaling over a grid of covariate dimensions
    DimSweep(DimSweepArgs),
    /// Run the acceptance suite
    Verify(VerifyArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CovariateLaw {
    Rademacher,
    Gaussian,
}

impl From<CovariateLaw> for Covariates {
    fn from(c: CovariateLaw) -> Self {
        match c {
            CovariateLaw::Rademacher => Covariates::Rademacher,
            CovariateLaw::Gaussian => Covariates::Gaussian,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// exponential, normal or logistic
    #[arg(long)]
    model: String,
    /// Null value, comma separated (normal: mu,sigma^2; logistic: one entry per covariate)
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    theta0: Vec<f64>,
    /// Number of tested coordinates
    #[arg(long, default_value_t = 1)]
    r: usize,
    /// Test function: ht, zero, or a table file with declared norms
    #[arg(long, default_value = "ht")]
    h: String,
    /// Covariate law for the logistic model
    #[arg(long, value_enum, default_value_t = CovariateLaw::Rademacher)]
    covariates: CovariateLaw,
}

#[derive(Args, Debug, Clone)]
struct OracleArgs {
    /// Radius of the MLE neighbourhood (defaults to the model's choice)
    #[arg(long)]
    eps: Option<f64>,
    /// Replicates for simulated moment oracles
    #[arg(long, default_value_t = OracleSettings::default().reps)]
    oracle_reps: usize,
    /// Single-observation draws for simulated moment oracles
    #[arg(long, default_value_t = OracleSettings::default().draws)]
    oracle_draws: usize,
    /// Seed of simulated moment oracles
    #[arg(long, default_value_t = OracleSettings::default().seed)]
    oracle_seed: u64,
}

impl OracleArgs {
    fn settings(&self) -> OracleSettings {
        OracleSettings {
            reps: self.oracle_reps,
            draws: self.oracle_draws,
            seed: self.oracle_seed,
            ..OracleSettings::default()
        }
    }
}

#[derive(Args, Debug)]
struct BoundArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    oracle: OracleArgs,
    #[arg(long)]
    n: usize,
    /// Evaluate the closed-form corollary instead of the assembled bound
    #[arg(long)]
    corollary: bool,
    /// With --corollary on the exponential model: evaluate the display without
    /// the Stein-term prefactor
    #[arg(long)]
    unprefactored: bool,
    /// Also write the JSON report to this file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    oracle: OracleArgs,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the bound comparison
    #[arg(long)]
    no_bound: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RateSweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    oracle: OracleArgs,
    /// Sample sizes, comma separated (scientific notation accepted)
    #[arg(long, value_delimiter = ',', default_value = "1e4,1e5,1e6,1e7,1e8,1e9,1e10")]
    n_grid: Vec<String>,
    /// Replicates for the simulated columns; omitted means bound only
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DimSweepArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    d_grid: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    r: usize,
    #[arg(long, default_value = "ht")]
    h: String,
    #[arg(long, value_enum, default_value_t = CovariateLaw::Rademacher)]
    covariates: CovariateLaw,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Criteria to run, comma separated (default: all)
    #[arg(long, value_delimiter = ',')]
    criteria: Vec<u8>,
}

/// Failure of a command, mapped to the exit code.
enum Failure {
    Validation(String),
    Numerical(String),
    CriteriaFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let args = match config::expand_args(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    let outcome = configure_threads().and_then(|()| run(cli.command));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::CriteriaFailed) => ExitCode::from(1),
    }
}

fn configure_threads() -> CmdResult {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Failure::Validation(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Validation(e.to_string()))
}

fn run(command: Command) -> CmdResult {
    match command {
        Command::Bound(a) => bound(a),
        Command::Simulate(a) => simulate(a),
        Command::RateSweep(a) => rate(a),
        Command::DimSweep(a) => dims(a),
        Command::Verify(a) => verify(a),
    }
}

fn load_test_function(spec: &str) -> Result<TestFunction, Failure> {
    let h = match spec {
        "ht" => TestFunction::ht(),
        "zero" => TestFunction::zero(),
        path => {
            let file = File::open(path)
                .map_err(|e| Failure::Validation(format!("cannot open h table `{path}`: {e}")))?;
            TestFunction::read_table(path, BufReader::new(file))?
        }
    };
    let report = validate_test_function(&h, GridSpec::default())?;
    debug_assert!(report.passed);
    Ok(h)
}

fn load_model(args: &ModelArgs) -> Result<Box<dyn ParametricModel>, Failure> {
    let model = model_by_id(&args.model, args.theta0.len(), args.covariates.into())?;
    model.validate_theta(&args.theta0)?;
    Ok(model)
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Numerical(e.to_string()))?;
    println!("{text}");
    if let Some(path) = out {
        std::fs::write(path, format!("{text}\n"))?;
    }
    Ok(())
}

fn emit_csv(rows: &[SweepRow], out: Option<&Path>) -> CmdResult {
    let mut buf = Vec::new();
    write_sweep_csv(rows, &mut buf)?;
    std::io::stdout().write_all(&buf)?;
    if let Some(path) = out {
        std::fs::write(path, &buf)?;
    }
    Ok(())
}

fn breakdown_table(b: &BoundBreakdown) {
    let t = &b.terms;
    eprintln!("{:<12}{:>14}", "term", "value");
    for (name, v) in [
        ("r", t.r),
        ("k1", t.k1),
        ("k1*", t.k1_star),
        ("k2", t.k2),
        ("k2*", t.k2_star),
        ("total", b.total),
    ] {
        eprintln!("{name:<12}{v:>14.3}");
    }
    if !b.certified {
        eprintln!("{:<12}{:>14.3}  (not certified: Monte Carlo moments)", "± mc", b.uncertainty);
    }
}

#[derive(Serialize)]
struct CorollaryReport {
    model: String,
    theta0: Vec<f64>,
    n: usize,
    norms: HNorms,
    prefactored: bool,
    total: f64,
}

fn bound(a: BoundArgs) -> CmdResult {
    if a.n < 1 {
        return Err(Failure::Validation("n must be >= 1".into()));
    }
    let h = load_test_function(&a.model.h)?;
    let model = load_model(&a.model)?;
    if a.corollary {
        let total = match model.id() {
            "exponential" => exponential_corollary_bound(a.model.theta0[0], a.n, &h.norms, !a.unprefactored),
            "normal" => normal_corollary_bound(a.model.theta0[1], a.n, &h.norms)?,
            other => {
                return Err(Failure::Validation(format!("no closed-form corollary for `{other}`")));
            }
        };
        eprintln!("{:<12}{total:>14.3}", "corollary");
        return emit_json(
            &CorollaryReport {
                model: model.id().to_string(),
                theta0: a.model.theta0.clone(),
                n: a.n,
                norms: h.norms,
                prefactored: model.id() == "exponential" && !a.unprefactored,
                total,
            },
            a.out.as_deref(),
        );
    }
    let b = assemble_bound(
        model.as_ref(),
        &a.model.theta0,
        a.n,
        a.model.r,
        &h,
        a.oracle.eps,
        &a.oracle.settings(),
    )?;
    breakdown_table(&b);
    emit_json(&b, a.out.as_deref())
}

#[derive(Serialize)]
struct SimulationReport {
    estimate: MCEstimate,
    chisq_ref: f64,
    ks_distance: f64,
    bound: Option<BoundBreakdown>,
}

fn simulate(a: SimulateArgs) -> CmdResult {
    if a.reps < MIN_REPS {
        return Err(Failure::Validation(format!("simulate needs --reps >= {MIN_REPS}")));
    }
    let h = load_test_function(&a.model.h)?;
    let model = load_model(&a.model)?;
    let theta0 = &a.model.theta0;
    let stats = simulate_statistics(model.as_ref(), theta0, a.n, a.model.r, a.reps, a.seed)?;
    let ok: Vec<f64> = stats.iter().flatten().copied().collect();
    let failed = stats.len() - ok.len();
    if failed * 1000 > a.reps {
        return Err(Error::ExcessiveFitFailures { failed, reps: a.reps }.into());
    }
    let chisq_ref = chisq_expectation(&h, a.model.r)?;
    let (mean, stderr) = distance_from_statistics(&ok, &h, chisq_ref);
    let estimate = MCEstimate {
        mean,
        stderr,
        reps: a.reps,
        master_seed: a.seed,
        failed_reps: failed,
    };
    let eps = a.oracle.eps.or_else(|| model.epsilon_default(theta0));
    let bound = if a.no_bound || eps.is_none() {
        None
    } else {
        Some(assemble_bound(model.as_ref(), theta0, a.n, a.model.r, &h, eps, &a.oracle.settings())?)
    };
    let report = SimulationReport {
        estimate,
        chisq_ref,
        ks_distance: ks_distance(&ok, a.model.r)?,
        bound,
    };
    eprintln!("{:<12}{:>14.3}", "distance", report.estimate.mean);
    eprintln!("{:<12}{:>14.3}", "stderr", report.estimate.stderr);
    eprintln!("{:<12}{:>14.3}", "ks", report.ks_distance);
    if let Some(b) = &report.bound {
        eprintln!("{:<12}{:>14.3}", "bound", b.total);
    }
    emit_json(&report, a.out.as_deref())
}

fn parse_n(s: &str) -> Result<usize, Failure> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Failure::Validation(format!("bad sample size `{s}`")))?;
    if !(v >= 1.0 && v.fract() == 0.0 && v < 9.0e15) {
        return Err(Failure::Validation(format!("sample size must be a positive integer, got `{s}`")));
    }
    Ok(v as usize)
}

fn rate(a: RateSweepArgs) -> CmdResult {
    let h = load_test_function(&a.model.h)?;
    let model = load_model(&a.model)?;
    let grid = a.n_grid.iter().map(|s| parse_n(s)).collect::<Result<Vec<_>, _>>()?;
    let mc = a.reps.map(|reps| McOptions {
        reps,
        master_seed: a.seed,
    });
    let sweep = rate_sweep(
        model.as_ref(),
        &a.model.theta0,
        a.model.r,
        &h,
        &grid,
        a.oracle.eps,
        &a.oracle.settings(),
        mc,
    )?;
    for row in &sweep.rows {
        eprintln!("{:<14}{:>14.3}", row.key, row.bound_total);
    }
    eprintln!("{:<14}{:>14.3}", "slope", sweep.slope);
    emit_csv(&sweep.rows, a.out.as_deref())
}

fn dims(a: DimSweepArgs) -> CmdResult {
    let h = load_test_function(&a.h)?;
    let mc = a.reps.map(|reps| McOptions {
        reps,
        master_seed: a.seed,
    });
    let rows = dimension_sweep(a.n, &a.d_grid, a.r, a.covariates.into(), &h, mc)?;
    for row in &rows {
        eprintln!("{:<6}{:>20.3}", row.key, row.bound_total);
    }
    emit_csv(&rows, a.out.as_deref())
}

fn verify(a: VerifyArgs) -> CmdResult {
    let ids: Vec<u8> = if a.criteria.is_empty() {
        CRITERIA.iter().map(|(id, _)| *id).collect()
    } else {
        a.criteria
    };
    let mut all_passed = true;
    for id in ids {
        let report = run_criterion(id)?;
        all_passed &= report.passed;
        println!(
            "criterion {} [{}]: {} — {}",
            report.id,
            report.name,
            if report.passed { "PASS" } else { "FAIL" },
            report.detail
        );
    }
    if all_passed {
        Ok(())
    } else {
        Err(Failure::CriteriaFailed)
    }
}
