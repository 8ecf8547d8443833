//! Command-line front end for the `ccp` library.
//!
//! Six subcommands cover the calculators and the experiment harness: `sizes`
//! for scenario sample counts, `calibrate` for the divergence-ball radius,
//! `translate` for the Monte Carlo tolerance, `ddata` for worst-case
//! divergences of the canonical generating distributions, `np-example` for
//! the worst-case Neyman-Pearson powers, and `run` for a full seeded
//! experiment described by a JSON config file.
//!
//! Every subcommand prints a human-readable default and accepts
//! `--format json`. Exit codes: 0 on success, 1 on usage errors, 2 on
//! runtime errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use ccp::bench::{self, EmitFormat};
use ccp::divergence::{select_delta, DivergenceKind, ToleranceRule};
use ccp::generating::{
    d_data_gaussian_mixture, d_data_pointmass, d_data_sphere_mixture, np_worst_power, NpNull,
};
use ccp::models::{calibrate, Family, GaussianFamily};
use ccp::sizes::{fast_sizes, n_exact, SizeRequest};

#[derive(Parser)]
#[command(
    name = "ccp",
    version,
    about = "Calculators and experiment runner for data-driven chance-constrained programs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scenario sample count for a violation tolerance and confidence slack.
    Sizes(SizesArgs),
    /// Divergence-ball radius implied by the sample count and level.
    Calibrate(CalibrateArgs),
    /// Monte Carlo tolerance delta_eps implied by a calibrated ball.
    Translate(TranslateArgs),
    /// Worst-case data divergence of a canonical generating distribution and
    /// the scenario budgets it implies.
    Ddata(DdataArgs),
    /// Worst-case Neyman-Pearson power of a candidate null against
    /// unit-variance Gaussian alternatives.
    NpExample(NpArgs),
    /// Run a seeded experiment described by a JSON config file.
    Run(RunArgs),
}

/// Output shape shared by the calculator subcommands.
#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    #[value(name = "chi2_closed_form")]
    Chi2ClosedForm,
    #[value(name = "cauchy_schwarz_bound")]
    CauchySchwarzBound,
}

impl From<RuleArg> for ToleranceRule {
    fn from(arg: RuleArg) -> Self {
        match arg {
            RuleArg::Chi2ClosedForm => ToleranceRule::Chi2ClosedForm,
            RuleArg::CauchySchwarzBound => ToleranceRule::CauchySchwarzBound,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorArg {
    #[value(name = "pointmass")]
    PointMass,
    #[value(name = "sphere")]
    Sphere,
    #[value(name = "gaussian")]
    Gaussian,
}

impl GeneratorArg {
    fn label(self) -> &'static str {
        match self {
            GeneratorArg::PointMass => "pointmass",
            GeneratorArg::Sphere => "sphere",
            GeneratorArg::Gaussian => "gaussian",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NullArg {
    #[value(name = "stdnormal")]
    StdNormal,
    #[value(name = "normal0var2")]
    Normal0Var2,
    #[value(name = "mixture")]
    Mixture,
}

impl NullArg {
    fn label(self) -> &'static str {
        match self {
            NullArg::StdNormal => "stdnormal",
            NullArg::Normal0Var2 => "normal0var2",
            NullArg::Mixture => "mixture",
        }
    }
}

impl From<NullArg> for NpNull {
    fn from(arg: NullArg) -> Self {
        match arg {
            NullArg::StdNormal => NpNull::StdNormal,
            NullArg::Normal0Var2 => NpNull::Normal0Var2,
            NullArg::Mixture => NpNull::SymmetricTwoPointMixture,
        }
    }
}

fn probability(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie in (0, 1), got {v}"))
    }
}

fn test_size(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 0.5 {
        Ok(v)
    } else {
        Err(format!("must lie in (0, 0.5), got {v}"))
    }
}

fn positive_real(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive and finite, got {v}"))
    }
}

#[derive(Args)]
struct SizesArgs {
    /// Violation tolerance.
    #[arg(long = "eps", value_parser = probability)]
    epsilon: f64,
    /// Confidence slack.
    #[arg(long, value_parser = probability)]
    beta: f64,
    /// Decision dimension.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    dim: u32,
    /// Report the two-stage sizes instead of the single-stage count.
    #[arg(long)]
    fast: bool,
    #[arg(long, value_enum, default_value = "text")]
    format: ReportFormat,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Observed sample count.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Confidence level complement for the parameter region.
    #[arg(long, value_parser = probability)]
    alpha: f64,
    /// Parameter dimension.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    dim: u32,
    #[arg(long, value_enum, default_value = "text")]
    format: ReportFormat,
}

#[derive(Args)]
struct TranslateArgs {
    /// Violation tolerance.
    #[arg(long = "eps", value_parser = probability)]
    epsilon: f64,
    /// Observed sample count.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Confidence level complement for the parameter region.
    #[arg(long, value_parser = probability)]
    alpha: f64,
    /// Parameter dimension.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    dim: u32,
    /// Tolerance translation rule.
    #[arg(long, value_enum)]
    rule: RuleArg,
    #[arg(long, value_enum, default_value = "text")]
    format: ReportFormat,
}

#[derive(Args)]
struct DdataArgs {
    /// Observed sample count.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Confidence level complement for the parameter region.
    #[arg(long, value_parser = probability)]
    alpha: f64,
    /// Parameter dimension.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    dim: u32,
    /// Generating distribution whose worst-case divergence is reported.
    #[arg(long, value_enum)]
    generator: GeneratorArg,
    /// Violation tolerance fed to the tolerance translation.
    #[arg(long = "eps", value_parser = probability, default_value_t = 0.05)]
    epsilon: f64,
    /// Confidence slack fed to the sample-size calculus.
    #[arg(long, value_parser = probability, default_value_t = 0.01)]
    beta: f64,
    #[arg(long, value_enum, default_value = "text")]
    format: ReportFormat,
}

#[derive(Args)]
struct NpArgs {
    /// Null distribution under test.
    #[arg(long, value_enum)]
    p0: NullArg,
    /// Test size.
    #[arg(long, value_parser = test_size)]
    delta: f64,
    /// Half-width of the alternative mean range.
    #[arg(long = "theta-max", value_parser = positive_real, default_value_t = 1.0)]
    theta_abs_max: f64,
    #[arg(long, value_enum, default_value = "text")]
    format: ReportFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum SummaryFormat {
    Csv,
    Json,
}

impl From<SummaryFormat> for EmitFormat {
    fn from(arg: SummaryFormat) -> Self {
        match arg {
            SummaryFormat::Csv => EmitFormat::Csv,
            SummaryFormat::Json => EmitFormat::Json,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Path to the experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's trial count.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    trials: Option<u64>,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the summary to this path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: SummaryFormat,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(output) => {
            print!("{output}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> ccp::Result<String> {
    match command {
        Command::Sizes(args) => run_sizes(args),
        Command::Calibrate(args) => run_calibrate(args),
        Command::Translate(args) => run_translate(args),
        Command::Ddata(args) => run_ddata(args),
        Command::NpExample(args) => run_np(args),
        Command::Run(args) => run_experiment(args),
    }
}

fn json_line<T: Serialize>(report: &T) -> ccp::Result<String> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    Ok(text)
}

#[derive(Serialize)]
struct SizesReport {
    epsilon: f64,
    beta: f64,
    dim: u32,
    n_exact: u64,
}

#[derive(Serialize)]
struct FastSizesReport {
    epsilon: f64,
    beta: f64,
    dim: u32,
    n1: u64,
    n2: u64,
    total: u64,
}

fn run_sizes(args: SizesArgs) -> ccp::Result<String> {
    if args.fast {
        let sizes = fast_sizes(args.epsilon, args.beta, args.dim)?;
        match args.format {
            ReportFormat::Text => Ok(format!("{} {} {}\n", sizes.n1, sizes.n2, sizes.total())),
            ReportFormat::Json => json_line(&FastSizesReport {
                epsilon: args.epsilon,
                beta: args.beta,
                dim: args.dim,
                n1: sizes.n1,
                n2: sizes.n2,
                total: sizes.total(),
            }),
        }
    } else {
        let n = n_exact(&SizeRequest::new(args.epsilon, args.beta, args.dim)?)?;
        match args.format {
            ReportFormat::Text => Ok(format!("{n}\n")),
            ReportFormat::Json => json_line(&SizesReport {
                epsilon: args.epsilon,
                beta: args.beta,
                dim: args.dim,
                n_exact: n,
            }),
        }
    }
}

/// Ball radius for the given calibration inputs. The radius depends on the
/// family only through its dimension, so a unit Gaussian stands in.
fn ball_radius(n: u64, alpha: f64, dim: u32) -> ccp::Result<f64> {
    let family = Family::Gaussian(GaussianFamily::identity(dim as usize));
    let set = calibrate(
        &family,
        &DVector::zeros(dim as usize),
        n as usize,
        alpha,
        DivergenceKind::Chi2,
    )?;
    Ok(set.radius)
}

#[derive(Serialize)]
struct CalibrateReport {
    n: u64,
    alpha: f64,
    dim: u32,
    lambda: f64,
}

fn run_calibrate(args: CalibrateArgs) -> ccp::Result<String> {
    let lambda = ball_radius(args.n, args.alpha, args.dim)?;
    match args.format {
        ReportFormat::Text => Ok(format!("{lambda:.6}\n")),
        ReportFormat::Json => json_line(&CalibrateReport {
            n: args.n,
            alpha: args.alpha,
            dim: args.dim,
            lambda,
        }),
    }
}

#[derive(Serialize)]
struct TranslateReport {
    epsilon: f64,
    n: u64,
    alpha: f64,
    dim: u32,
    rule: ToleranceRule,
    lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    d_data: Option<f64>,
    delta_epsilon: f64,
}

fn run_translate(args: TranslateArgs) -> ccp::Result<String> {
    let rule = ToleranceRule::from(args.rule);
    let lambda = ball_radius(args.n, args.alpha, args.dim)?;
    let (consumed, d_data) = match rule {
        ToleranceRule::Chi2ClosedForm => (lambda, None),
        ToleranceRule::CauchySchwarzBound => {
            let d = lambda.exp_m1();
            (d, Some(d))
        }
    };
    let delta = select_delta(args.epsilon, consumed, rule)?;
    match args.format {
        ReportFormat::Text => {
            let mut out = format!("lambda {lambda:.6}\n");
            if let Some(d) = d_data {
                out.push_str(&format!("d_data {d:.6}\n"));
            }
            out.push_str(&format!("delta_eps {delta:.4e}\n"));
            Ok(out)
        }
        ReportFormat::Json => json_line(&TranslateReport {
            epsilon: args.epsilon,
            n: args.n,
            alpha: args.alpha,
            dim: args.dim,
            rule,
            lambda,
            d_data,
            delta_epsilon: delta,
        }),
    }
}

#[derive(Serialize)]
struct DdataReport {
    variant: &'static str,
    d_data: f64,
    delta_epsilon: f64,
    #[serde(rename = "N_so")]
    n_so: u64,
    #[serde(rename = "N_fast")]
    n_fast: u64,
}

fn run_ddata(args: DdataArgs) -> ccp::Result<String> {
    let n = args.n as usize;
    let dim = args.dim as usize;
    let d_data = match args.generator {
        GeneratorArg::PointMass => d_data_pointmass(n, args.alpha, dim)?,
        GeneratorArg::Sphere => d_data_sphere_mixture(n, args.alpha, dim)?,
        GeneratorArg::Gaussian => d_data_gaussian_mixture(n, args.alpha, dim)?,
    };
    let delta = select_delta(args.epsilon, d_data, ToleranceRule::CauchySchwarzBound)?;
    let n_so = n_exact(&SizeRequest::new(delta, args.beta, args.dim)?)?;
    let n_fast = fast_sizes(delta, args.beta, args.dim)?.total();
    match args.format {
        ReportFormat::Text => Ok(format!(
            "d_data {d_data:.4}\ndelta_eps {delta:.4e}\nN_so {n_so}\nN_fast {n_fast}\n"
        )),
        ReportFormat::Json => json_line(&DdataReport {
            variant: args.generator.label(),
            d_data,
            delta_epsilon: delta,
            n_so,
            n_fast,
        }),
    }
}

#[derive(Serialize)]
struct NpReport {
    variant: &'static str,
    delta: f64,
    theta_abs_max: f64,
    worst_case_power: f64,
}

fn run_np(args: NpArgs) -> ccp::Result<String> {
    let power = np_worst_power(args.p0.into(), args.theta_abs_max, args.delta)?;
    match args.format {
        ReportFormat::Text => Ok(format!("{power:.4}\n")),
        ReportFormat::Json => json_line(&NpReport {
            variant: args.p0.label(),
            delta: args.delta,
            theta_abs_max: args.theta_abs_max,
            worst_case_power: power,
        }),
    }
}

fn run_experiment(args: RunArgs) -> ccp::Result<String> {
    let mut config = bench::load_experiment(&args.config)?;
    if let Some(trials) = args.trials {
        config.trials = trials as usize;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let plan = config.plan()?;
    let table = bench::run_experiment(&plan, config.trials, config.seed)?;
    let format = EmitFormat::from(args.format);
    let rendered = bench::render_summary(&table, format)?;
    if let Some(path) = &args.out {
        bench::emit(&table, path, format)?;
    }
    Ok(rendered)
}
