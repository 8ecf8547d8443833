//! Repeated-trial experiment harness.
//!
//! An experiment fixes a true distribution and a pipeline configuration, then
//! repeats the whole procedure across independent trials: draw a fresh
//! observed sample from the truth, run the pipeline on it, and measure the
//! true violation probability of the returned decision. Trial `i` uses the
//! random stream with id `i`, so results are independent of thread count and
//! stable under reruns; the per-trial stream covers the observed sample, the
//! scenario draws, and any Monte Carlo violation check, in that order.
//!
//! The true violation probability has a closed form for the single linear
//! Gaussian constraint and is estimated by Monte Carlo everywhere else.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::ToleranceRule;
use crate::error::{Error, Result};
use crate::models::{ExponentialFamilyRates, Family, GaussianFamily};
use crate::numerics::std_normal_cdf;
use crate::pipeline::{run, GeneratorKind, Method, PipelineConfig, ProblemSpec};
use crate::sampler::{
    random_covariance, sample_exponential, sample_gaussian, SeededStream,
};
use crate::sizes::{n_exact, SizeRequest};

/// Monte Carlo draws for violation estimation when no closed form applies.
pub const DEFAULT_MC_VIOLATION_DRAWS: usize = 10_000;

/// Default number of trials in an experiment.
pub const DEFAULT_TRIALS: usize = 100;

/// The distribution the observed samples and the violation measurements are
/// drawn from. This is what the pipeline does not get to see.
#[derive(Debug, Clone)]
pub enum TrueDistribution {
    Gaussian { theta: DVector<f64> },
    Exponential { rates: ExponentialFamilyRates },
}

/// One experiment: the pipeline configuration under test, the ground truth,
/// the per-trial sample size, and the violation-estimation budget.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub config: PipelineConfig,
    pub truth: TrueDistribution,
    /// Observed sample size drawn fresh each trial.
    pub n: usize,
    pub mc_violation_draws: usize,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.n == 0 {
            return Err(Error::invalid(
                "ExperimentPlan",
                "the per-trial sample size must be positive",
            ));
        }
        if self.mc_violation_draws == 0 {
            return Err(Error::invalid(
                "ExperimentPlan",
                "the violation-estimation budget must be positive",
            ));
        }
        let family = self.config.problem.uncertainty_family();
        match (&self.truth, &family) {
            (TrueDistribution::Gaussian { theta }, Family::Gaussian(f)) => {
                if theta.len() != f.dim() {
                    return Err(Error::DimensionMismatch {
                        op: "ExperimentPlan",
                        expected: f.dim(),
                        got: theta.len(),
                    });
                }
            }
            (TrueDistribution::Exponential { rates }, Family::Exponential { dim }) => {
                if rates.dim() != *dim {
                    return Err(Error::DimensionMismatch {
                        op: "ExperimentPlan",
                        expected: *dim,
                        got: rates.dim(),
                    });
                }
            }
            _ => {
                return Err(Error::invalid(
                    "ExperimentPlan",
                    "the true distribution does not match the problem family",
                ));
            }
        }
        Ok(())
    }
}

/// Outcome of one trial. Failures keep their status string and NaN
/// measurements; aggregation skips them.
#[derive(Debug, Clone, Serialize)]
pub struct TrialReport {
    pub trial: usize,
    /// True violation probability of the returned decision.
    pub violation: f64,
    pub objective: f64,
    /// Observed sample size the trial fitted on.
    pub n: usize,
    /// Scenario draws backing the trial's solution.
    pub n_scenarios: u64,
    pub status: String,
}

impl TrialReport {
    fn succeeded(&self) -> bool {
        self.status == "optimal" && self.violation.is_finite()
    }
}

/// Aggregates of an experiment. Serializes with the column names of the
/// CSV emitter: `N_exact` is the plain scenario requirement at the original
/// tolerance, `N` the scenario budget the pipeline actually used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    /// Mean true violation across successful trials.
    pub eps_hat: f64,
    /// 95th percentile (nearest rank) of the true violations.
    pub q95: f64,
    /// Mean objective value.
    pub f_val: f64,
    /// Fraction of successful trials with violation at most epsilon.
    pub feasibility_rate: f64,
    pub n: usize,
    #[serde(rename = "N_exact")]
    pub n_exact: u64,
    #[serde(rename = "N")]
    pub n_scenarios: u64,
    pub trials: usize,
    pub failed_trials: usize,
}

/// Exact violation probability of `x` for the single linear Gaussian
/// constraint: `P((a + xi)' x > b)` under `xi ~ N(theta_true, Sigma)`.
///
/// Zero decisions never violate; otherwise the margin is normal with mean
/// `b - (a + theta_true)' x` and standard deviation `sqrt(x' Sigma x)`.
pub fn violation_exact_gaussian_single(
    x: &DVector<f64>,
    theta_true: &DVector<f64>,
    family: &GaussianFamily,
    a: &DVector<f64>,
    b: f64,
) -> Result<f64> {
    let d = family.dim();
    for (name, len) in [("x", x.len()), ("theta_true", theta_true.len()), ("a", a.len())] {
        if len != d {
            return Err(Error::invalid(
                "violation_exact_gaussian_single",
                format!("{name} has length {len} but the family dimension is {d}"),
            ));
        }
    }
    if x.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let spread = (family.covariance() * x).dot(x).sqrt();
    let margin = b - a.dot(x) - theta_true.dot(x);
    Ok(1.0 - std_normal_cdf(margin / spread))
}

/// Monte Carlo estimate of the violation probability of `x` under the true
/// distribution, for any problem family. Fresh uncertainty is drawn per
/// sample; for the quadratic constraint that means a fresh m-draw scenario
/// matrix each time.
pub fn violation_mc(
    x: &DVector<f64>,
    problem: &ProblemSpec,
    truth: &TrueDistribution,
    count: usize,
    stream: &mut SeededStream,
) -> Result<f64> {
    if count == 0 {
        return Err(Error::invalid(
            "violation_mc",
            "the sample count must be positive",
        ));
    }
    if x.len() != problem.decision_dim() {
        return Err(Error::DimensionMismatch {
            op: "violation_mc",
            expected: problem.decision_dim(),
            got: x.len(),
        });
    }
    let mismatch = || {
        Error::invalid(
            "violation_mc",
            "the true distribution does not match the problem family",
        )
    };
    let violated: usize = match problem {
        ProblemSpec::SingleLinear { family, a, b, .. } => {
            let theta = match truth {
                TrueDistribution::Gaussian { theta } => theta,
                _ => return Err(mismatch()),
            };
            let samples = sample_gaussian(theta, family, count, stream)?;
            let slack = b - a.dot(x);
            (&samples * x).iter().filter(|v| **v > slack).count()
        }
        ProblemSpec::JointLinear { family, a, b, .. }
        | ProblemSpec::QuadraticObjective { family, a, b, .. } => {
            let theta = match truth {
                TrueDistribution::Gaussian { theta } => theta,
                _ => return Err(mismatch()),
            };
            let (m, d) = (a.nrows(), a.ncols());
            let ax = a * x;
            let flat = sample_gaussian(theta, family, count, stream)?;
            (0..count)
                .filter(|&i| {
                    (0..m).any(|j| {
                        let noise: f64 =
                            (0..d).map(|k| flat[(i, j * d + k)] * x[k]).sum();
                        ax[j] + noise > b[j]
                    })
                })
                .count()
        }
        ProblemSpec::QuadraticConstraint { family, a, b, m, .. } => {
            let theta = match truth {
                TrueDistribution::Gaussian { theta } => theta,
                _ => return Err(mismatch()),
            };
            let slack = b - a.dot(x);
            let mut violated = 0;
            for _ in 0..count {
                let draws = sample_gaussian(theta, family, *m, stream)?;
                let quad: f64 = (0..*m)
                    .map(|k| {
                        let s = draws.row(k).transpose().dot(x);
                        s * s
                    })
                    .sum::<f64>()
                    / *m as f64;
                if quad > slack {
                    violated += 1;
                }
            }
            violated
        }
        ProblemSpec::ExponentialLinear { a, b, .. } => {
            let rates = match truth {
                TrueDistribution::Exponential { rates } => rates,
                _ => return Err(mismatch()),
            };
            let samples = sample_exponential(rates, count, stream)?;
            let slack = b - a.dot(x);
            (&samples * x).iter().filter(|v| **v > slack).count()
        }
    };
    Ok(violated as f64 / count as f64)
}

fn draw_data(plan: &ExperimentPlan, stream: &mut SeededStream) -> Result<DMatrix<f64>> {
    match (&plan.truth, &plan.config.problem.uncertainty_family()) {
        (TrueDistribution::Gaussian { theta }, Family::Gaussian(family)) => {
            sample_gaussian(theta, family, plan.n, stream)
        }
        (TrueDistribution::Exponential { rates }, _) => {
            sample_exponential(rates, plan.n, stream)
        }
        _ => Err(Error::invalid(
            "run_trials",
            "the true distribution does not match the problem family",
        )),
    }
}

fn measure_violation(
    plan: &ExperimentPlan,
    x: &DVector<f64>,
    stream: &mut SeededStream,
) -> Result<f64> {
    match (&plan.config.problem, &plan.truth) {
        (
            ProblemSpec::SingleLinear { family, a, b, .. },
            TrueDistribution::Gaussian { theta },
        ) => violation_exact_gaussian_single(x, theta, family, a, *b),
        (problem, truth) => {
            violation_mc(x, problem, truth, plan.mc_violation_draws, stream)
        }
    }
}

fn run_one(plan: &ExperimentPlan, seed: u64, trial: usize) -> TrialReport {
    let mut stream = SeededStream::new(seed, trial as u64);
    let outcome = draw_data(plan, &mut stream)
        .and_then(|data| run(&data, &plan.config, &mut stream))
        .and_then(|(solution, report)| {
            let violation = if solution.status == crate::scenario::SolveStatus::Optimal {
                measure_violation(plan, &solution.x, &mut stream)?
            } else {
                f64::NAN
            };
            Ok(TrialReport {
                trial,
                violation,
                objective: solution.objective_value,
                n: plan.n,
                n_scenarios: report.n_scenarios,
                status: solution.status.to_string(),
            })
        });
    outcome.unwrap_or_else(|e| TrialReport {
        trial,
        violation: f64::NAN,
        objective: f64::NAN,
        n: plan.n,
        n_scenarios: 0,
        status: format!("error: {e}"),
    })
}

/// Runs `trials` independent trials in parallel and returns their reports in
/// trial order. Trial `i` uses stream id `i` of `seed`, so the output is a
/// pure function of `(plan, trials, seed)`.
pub fn run_trials(plan: &ExperimentPlan, trials: usize, seed: u64) -> Result<Vec<TrialReport>> {
    plan.validate()?;
    if trials == 0 {
        return Err(Error::invalid("run_trials", "at least one trial is required"));
    }
    Ok((0..trials)
        .into_par_iter()
        .map(|i| run_one(plan, seed, i))
        .collect())
}

/// 95th percentile by nearest rank of an ascending-sorted slice.
fn q95_nearest_rank(sorted: &[f64]) -> f64 {
    let rank = (0.95 * sorted.len() as f64).ceil() as usize;
    sorted[rank.max(1) - 1]
}

/// Aggregates trial reports. Failed trials (any status other than optimal)
/// are excluded from the statistics and counted in `failed_trials`; an
/// experiment where no trial succeeded is an error.
pub fn summarize(plan: &ExperimentPlan, reports: &[TrialReport]) -> Result<SummaryTable> {
    let ok: Vec<&TrialReport> = reports.iter().filter(|r| r.succeeded()).collect();
    if ok.is_empty() {
        return Err(Error::Solver(
            "no trial solved to optimality; nothing to aggregate".into(),
        ));
    }
    let k = ok.len() as f64;
    let mut violations: Vec<f64> = ok.iter().map(|r| r.violation).collect();
    violations.sort_by(f64::total_cmp);
    let eps_hat = violations.iter().sum::<f64>() / k;
    let q95 = q95_nearest_rank(&violations);
    let f_val = ok.iter().map(|r| r.objective).sum::<f64>() / k;
    let feasible = violations
        .iter()
        .filter(|v| **v <= plan.config.epsilon)
        .count();
    let req = SizeRequest::new(
        plan.config.epsilon,
        plan.config.beta,
        plan.config.problem.decision_dim() as u32,
    )?;
    Ok(SummaryTable {
        eps_hat,
        q95,
        f_val,
        feasibility_rate: feasible as f64 / k,
        n: plan.n,
        n_exact: n_exact(&req)?,
        n_scenarios: ok[0].n_scenarios,
        trials: reports.len(),
        failed_trials: reports.len() - ok.len(),
    })
}

/// Runs the full experiment and aggregates: `summarize(run_trials(..))`.
pub fn run_experiment(plan: &ExperimentPlan, trials: usize, seed: u64) -> Result<SummaryTable> {
    let reports = run_trials(plan, trials, seed)?;
    summarize(plan, &reports)
}

/// Output format of [`emit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmitFormat {
    Csv,
    Json,
}

fn round_sig6(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    let exp = v.abs().log10().floor() as i32;
    let scale = 10f64.powi(5 - exp);
    (v * scale).round() / scale
}

fn rounded(table: &SummaryTable) -> SummaryTable {
    SummaryTable {
        eps_hat: round_sig6(table.eps_hat),
        q95: round_sig6(table.q95),
        f_val: round_sig6(table.f_val),
        feasibility_rate: round_sig6(table.feasibility_rate),
        ..table.clone()
    }
}

/// Renders a summary table to a string: a two-line CSV with the fixed header
/// `eps_hat, q95, f_val, feasibility_rate, n, N_exact, N, trials`, or pretty
/// JSON mirroring the field names. Reals carry 6 significant digits.
pub fn render_summary(table: &SummaryTable, format: EmitFormat) -> Result<String> {
    let r = rounded(table);
    match format {
        EmitFormat::Csv => Ok(format!(
            "eps_hat, q95, f_val, feasibility_rate, n, N_exact, N, trials\n\
             {}, {}, {}, {}, {}, {}, {}, {}\n",
            r.eps_hat,
            r.q95,
            r.f_val,
            r.feasibility_rate,
            r.n,
            r.n_exact,
            r.n_scenarios,
            r.trials
        )),
        EmitFormat::Json => {
            let mut text = serde_json::to_string_pretty(&r)?;
            text.push('\n');
            Ok(text)
        }
    }
}

/// Writes [`render_summary`] output to a file.
pub fn emit(table: &SummaryTable, path: impl AsRef<Path>, format: EmitFormat) -> Result<()> {
    let path = path.as_ref();
    let text = render_summary(table, format)?;
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A scalar broadcast to a fixed-length vector, or the vector itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Broadcast {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Broadcast {
    fn to_vector(&self, len: usize, what: &str) -> Result<DVector<f64>> {
        match self {
            Broadcast::Scalar(v) => Ok(DVector::from_element(len, *v)),
            Broadcast::Vector(values) => {
                if values.len() != len {
                    return Err(Error::invalid(
                        "ProblemConfig",
                        format!("{what} has length {} but needs {len}", values.len()),
                    ));
                }
                Ok(DVector::from_column_slice(values))
            }
        }
    }
}

/// Problem family tags of the JSON experiment schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyTag {
    GaussianSingleLinear,
    GaussianJointLinear,
    GaussianQuadraticObjective,
    GaussianQuadraticConstraint,
    ExponentialLinear,
}

/// JSON description of a problem instance. `dim` is the decision dimension;
/// `m` is the number of joint rows (or averaged draws for the quadratic
/// constraint); covariances come from `sigma_seed` (identity when absent),
/// the quadratic objective matrix from `h_seed` (identity when absent).
/// Constants default to `a = 5`, `b = 5`, `c = -1`; the truth defaults to
/// `theta_true = 0` for Gaussian families and `rates_true = 1` for the
/// exponential one.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub family: FamilyTag,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Broadcast>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Broadcast>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Broadcast>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_true: Option<Broadcast>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates_true: Option<Broadcast>,
}

impl ProblemConfig {
    fn scalar_b(&self) -> Result<f64> {
        match &self.b {
            None => Ok(5.0),
            Some(Broadcast::Scalar(v)) => Ok(*v),
            Some(Broadcast::Vector(_)) => Err(Error::invalid(
                "ProblemConfig",
                "b must be a scalar for this family",
            )),
        }
    }

    fn gaussian_family(&self, dim: usize) -> Result<GaussianFamily> {
        match self.sigma_seed {
            Some(seed) => random_covariance(dim, seed),
            None => Ok(GaussianFamily::identity(dim)),
        }
    }

    fn require_m(&self) -> Result<usize> {
        match self.m {
            Some(m) if m > 0 => Ok(m),
            Some(_) => Err(Error::invalid("ProblemConfig", "m must be positive")),
            None => Err(Error::invalid(
                "ProblemConfig",
                "this family requires the row/draw count m",
            )),
        }
    }

    fn check_truth_fields(&self) -> Result<()> {
        let gaussian = !matches!(self.family, FamilyTag::ExponentialLinear);
        if gaussian && self.rates_true.is_some() {
            return Err(Error::invalid(
                "ProblemConfig",
                "rates_true only applies to the exponential family",
            ));
        }
        if !gaussian && self.theta_true.is_some() {
            return Err(Error::invalid(
                "ProblemConfig",
                "theta_true only applies to Gaussian families",
            ));
        }
        Ok(())
    }

    /// Builds the problem instance and the true distribution it is tested
    /// against.
    pub fn build(&self) -> Result<(ProblemSpec, TrueDistribution)> {
        if self.dim == 0 {
            return Err(Error::invalid("ProblemConfig", "dim must be positive"));
        }
        self.check_truth_fields()?;
        let d = self.dim;
        let default_a = Broadcast::Scalar(5.0);
        let default_c = Broadcast::Scalar(-1.0);
        let a_spec = self.a.as_ref().unwrap_or(&default_a);
        let c_spec = self.c.as_ref().unwrap_or(&default_c);
        let c = c_spec.to_vector(d, "c")?;
        let gaussian_truth = |dim: usize| -> Result<TrueDistribution> {
            let theta = self
                .theta_true
                .as_ref()
                .unwrap_or(&Broadcast::Scalar(0.0))
                .to_vector(dim, "theta_true")?;
            Ok(TrueDistribution::Gaussian { theta })
        };
        match self.family {
            FamilyTag::GaussianSingleLinear => {
                let problem = ProblemSpec::SingleLinear {
                    family: self.gaussian_family(d)?,
                    a: a_spec.to_vector(d, "a")?,
                    b: self.scalar_b()?,
                    c,
                };
                Ok((problem, gaussian_truth(d)?))
            }
            FamilyTag::GaussianJointLinear | FamilyTag::GaussianQuadraticObjective => {
                let m = self.require_m()?;
                let flat = a_spec.to_vector(m * d, "a")?;
                let a = DMatrix::from_fn(m, d, |r, cidx| flat[r * d + cidx]);
                let b = self
                    .b
                    .as_ref()
                    .unwrap_or(&Broadcast::Scalar(5.0))
                    .to_vector(m, "b")?;
                let family = self.gaussian_family(m * d)?;
                let truth = gaussian_truth(m * d)?;
                let problem = if self.family == FamilyTag::GaussianJointLinear {
                    ProblemSpec::JointLinear { family, a, b, c }
                } else {
                    let h = match self.h_seed {
                        Some(seed) => random_covariance(d, seed)?.covariance().clone(),
                        None => DMatrix::identity(d, d),
                    };
                    ProblemSpec::QuadraticObjective { family, h, a, b, c }
                };
                Ok((problem, truth))
            }
            FamilyTag::GaussianQuadraticConstraint => {
                let m = self.require_m()?;
                let problem = ProblemSpec::QuadraticConstraint {
                    family: self.gaussian_family(d)?,
                    a: a_spec.to_vector(d, "a")?,
                    b: self.scalar_b()?,
                    c,
                    m,
                };
                Ok((problem, gaussian_truth(d)?))
            }
            FamilyTag::ExponentialLinear => {
                let problem = ProblemSpec::ExponentialLinear {
                    a: a_spec.to_vector(d, "a")?,
                    b: self.scalar_b()?,
                    c,
                };
                let rates = self
                    .rates_true
                    .as_ref()
                    .unwrap_or(&Broadcast::Scalar(1.0))
                    .to_vector(d, "rates_true")?;
                let truth = TrueDistribution::Exponential {
                    rates: ExponentialFamilyRates::new(rates)?,
                };
                Ok((problem, truth))
            }
        }
    }
}

/// JSON experiment description: the pipeline knobs plus trial count, seed,
/// per-trial sample size, and the problem instance. `alpha` and `beta` may be
/// replaced by a single `confidence_budget`, split evenly between them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence_budget: Option<f64>,
    pub rule: ToleranceRule,
    pub generator: GeneratorKind,
    pub method: Method,
    pub n: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mc_draws")]
    pub mc_violation_draws: usize,
    pub problem: ProblemConfig,
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

fn default_mc_draws() -> usize {
    DEFAULT_MC_VIOLATION_DRAWS
}

impl ExperimentConfig {
    fn risk_split(&self) -> Result<(f64, f64)> {
        match (self.alpha, self.beta, self.confidence_budget) {
            (Some(alpha), Some(beta), None) => Ok((alpha, beta)),
            (None, None, Some(budget)) => Ok(PipelineConfig::split_budget(budget)),
            (None, None, None) => Err(Error::invalid(
                "ExperimentConfig",
                "specify either alpha and beta, or confidence_budget",
            )),
            _ => Err(Error::invalid(
                "ExperimentConfig",
                "alpha/beta and confidence_budget are mutually exclusive, and alpha and beta \
                 must be given together",
            )),
        }
    }

    /// Expands the description into a runnable plan.
    pub fn plan(&self) -> Result<ExperimentPlan> {
        let (alpha, beta) = self.risk_split()?;
        let (problem, truth) = self.problem.build()?;
        let plan = ExperimentPlan {
            config: PipelineConfig {
                epsilon: self.epsilon,
                alpha,
                beta,
                rule: self.rule,
                generator: self.generator,
                method: self.method,
                problem,
            },
            truth,
            n: self.n,
            mc_violation_draws: self.mc_violation_draws,
        };
        plan.validate()?;
        Ok(plan)
    }
}

/// Reads an [`ExperimentConfig`] from a JSON file.
pub fn load_experiment(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single_linear_plan(dim: usize, n: usize) -> ExperimentPlan {
        ExperimentPlan {
            config: PipelineConfig {
                epsilon: 0.05,
                alpha: 0.05,
                beta: 0.01,
                rule: ToleranceRule::CauchySchwarzBound,
                generator: GeneratorKind::PointMass,
                method: Method::ExtendedSo,
                problem: ProblemSpec::SingleLinear {
                    family: GaussianFamily::identity(dim),
                    a: DVector::from_element(dim, 5.0),
                    b: 5.0,
                    c: DVector::from_element(dim, -1.0),
                },
            },
            truth: TrueDistribution::Gaussian {
                theta: DVector::zeros(dim),
            },
            n,
            mc_violation_draws: DEFAULT_MC_VIOLATION_DRAWS,
        }
    }

    #[test]
    fn exact_violation_matches_the_normal_margin() {
        let family = GaussianFamily::identity(2);
        let a = DVector::from_element(2, 5.0);
        let theta = DVector::zeros(2);

        let zero = DVector::zeros(2);
        assert_eq!(
            violation_exact_gaussian_single(&zero, &theta, &family, &a, 5.0).unwrap(),
            0.0
        );

        // a' x = b puts the margin at zero, so the violation is exactly 1/2.
        let boundary = DVector::from_element(2, 0.5);
        assert_eq!(
            violation_exact_gaussian_single(&boundary, &theta, &family, &a, 5.0).unwrap(),
            0.5
        );

        let inside = DVector::from_element(2, 0.4);
        let expected = 1.0 - std_normal_cdf((5.0 - 4.0) / (2.0 * 0.16f64).sqrt());
        assert_relative_eq!(
            violation_exact_gaussian_single(&inside, &theta, &family, &a, 5.0).unwrap(),
            expected,
            max_relative = 1e-12
        );
    }

    #[test]
    fn exact_violation_agrees_with_monte_carlo() {
        let family = random_covariance(3, 42).unwrap();
        let a = DVector::from_element(3, 5.0);
        let theta = DVector::from_column_slice(&[0.1, -0.2, 0.3]);
        let x = DVector::from_column_slice(&[0.2, 0.1, 0.3]);
        let exact =
            violation_exact_gaussian_single(&x, &theta, &family, &a, 5.0).unwrap();

        let problem = ProblemSpec::SingleLinear {
            family: family.clone(),
            a,
            b: 5.0,
            c: DVector::from_element(3, -1.0),
        };
        let truth = TrueDistribution::Gaussian { theta };
        let count = 200_000;
        let mut stream = SeededStream::new(7, 0);
        let estimate = violation_mc(&x, &problem, &truth, count, &mut stream).unwrap();
        let se = (exact * (1.0 - exact) / count as f64).sqrt();
        assert!(
            (estimate - exact).abs() <= 4.0 * se + 1e-9,
            "estimate {estimate} vs exact {exact} (se {se})"
        );
    }

    #[test]
    fn joint_with_one_row_matches_the_single_formula() {
        let d = 3;
        let family = random_covariance(d, 11).unwrap();
        let a_vec = DVector::from_element(d, 5.0);
        let theta = DVector::from_column_slice(&[0.2, 0.0, -0.1]);
        let x = DVector::from_column_slice(&[0.25, 0.15, 0.2]);
        let exact =
            violation_exact_gaussian_single(&x, &theta, &family, &a_vec, 5.0).unwrap();

        let problem = ProblemSpec::JointLinear {
            family: family.clone(),
            a: DMatrix::from_element(1, d, 5.0),
            b: DVector::from_element(1, 5.0),
            c: DVector::from_element(d, -1.0),
        };
        let truth = TrueDistribution::Gaussian { theta };
        let count = 200_000;
        let mut stream = SeededStream::new(8, 0);
        let estimate = violation_mc(&x, &problem, &truth, count, &mut stream).unwrap();
        let se = (exact * (1.0 - exact) / count as f64).sqrt().max(1e-6);
        assert!(
            (estimate - exact).abs() <= 4.0 * se,
            "estimate {estimate} vs exact {exact}"
        );
    }

    #[test]
    fn zero_decision_never_violates() {
        let d = 3;
        let x = DVector::zeros(d);
        let truth = TrueDistribution::Gaussian {
            theta: DVector::zeros(d),
        };
        let quadratic = ProblemSpec::QuadraticConstraint {
            family: GaussianFamily::identity(d),
            a: DVector::from_element(d, 5.0),
            b: 5.0,
            c: DVector::from_element(d, -1.0),
            m: 2,
        };
        let mut stream = SeededStream::new(9, 0);
        assert_eq!(
            violation_mc(&x, &quadratic, &truth, 500, &mut stream).unwrap(),
            0.0
        );
    }

    #[test]
    fn q95_picks_the_nearest_rank() {
        let sorted: Vec<f64> = (1..=20).map(|i| i as f64 / 100.0).collect();
        assert_eq!(q95_nearest_rank(&sorted), 0.19);
        assert_eq!(q95_nearest_rank(&[0.3]), 0.3);
        let three = [0.1, 0.2, 0.7];
        assert_eq!(q95_nearest_rank(&three), 0.7);
    }

    #[test]
    fn trials_are_deterministic_and_stream_isolated() {
        let plan = single_linear_plan(4, 40);
        let a = run_trials(&plan, 2, 123).unwrap();
        let b = run_trials(&plan, 2, 123).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let first_only = run_trials(&plan, 1, 123).unwrap();
        assert_eq!(
            serde_json::to_string(&first_only[0]).unwrap(),
            serde_json::to_string(&a[0]).unwrap()
        );
        assert_ne!(a[0].violation.to_bits(), a[1].violation.to_bits());
    }

    #[test]
    fn small_experiment_produces_sane_aggregates() {
        let plan = single_linear_plan(4, 40);
        let reports = run_trials(&plan, 6, 2024).unwrap();
        let table = summarize(&plan, &reports).unwrap();
        assert_eq!(table.trials, 6);
        assert_eq!(table.failed_trials, 0);
        assert!(table.eps_hat <= plan.config.epsilon);
        assert!(table.eps_hat >= 0.0);
        assert!(table.q95 >= table.eps_hat);
        assert!(table.f_val < 0.0);
        assert!(table.feasibility_rate >= 0.0 && table.feasibility_rate <= 1.0);
        assert_eq!(table.n, 40);
        assert!(table.n_scenarios > table.n_exact || table.n_scenarios > 0);
        let direct = run_experiment(&plan, 6, 2024).unwrap();
        assert_eq!(direct, table);
    }

    #[test]
    fn summaries_render_with_the_pinned_header() {
        let table = SummaryTable {
            eps_hat: 0.004685726,
            q95: 0.0123456789,
            f_val: -0.724318,
            feasibility_rate: 1.0,
            n: 80,
            n_exact: 371,
            n_scenarios: 2611,
            trials: 100,
            failed_trials: 0,
        };
        let csv = render_summary(&table, EmitFormat::Csv).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "eps_hat, q95, f_val, feasibility_rate, n, N_exact, N, trials"
        );
        let row = lines.next().unwrap();
        assert_eq!(row.split(", ").count(), 8);
        assert!(row.contains("0.00468573"));
        assert!(row.contains("0.0123457"));
        assert!(lines.next().is_none());

        let json = render_summary(&table, EmitFormat::Json).unwrap();
        let parsed: SummaryTable = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.n_exact, 371);
        assert_eq!(parsed.n_scenarios, 2611);
        assert_relative_eq!(parsed.eps_hat, 0.00468573, max_relative = 1e-12);
        assert_eq!(parsed.failed_trials, 0);
        assert!(json.contains("\"N_exact\""));
        assert!(json.contains("\"N\""));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        emit(&table, &path, EmitFormat::Csv).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), csv);
    }

    #[test]
    fn experiment_config_round_trips_from_json() {
        let text = r#"{
            "epsilon": 0.05,
            "alpha": 0.05,
            "beta": 0.01,
            "rule": "cauchy_schwarz_bound",
            "generator": "point_mass",
            "method": "extended_so",
            "n": 80,
            "trials": 100,
            "seed": 0,
            "problem": {
                "family": "gaussian_single_linear",
                "dim": 10,
                "a": 5.0,
                "b": 5.0,
                "c": -1.0,
                "sigma_seed": 5
            }
        }"#;
        let config: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(config.trials, 100);
        assert_eq!(config.mc_violation_draws, DEFAULT_MC_VIOLATION_DRAWS);
        let plan = config.plan().unwrap();
        assert_eq!(plan.config.problem.decision_dim(), 10);
        assert!(matches!(
            plan.truth,
            TrueDistribution::Gaussian { ref theta } if theta.iter().all(|v| *v == 0.0)
        ));

        let budget = r#"{
            "epsilon": 0.05,
            "confidence_budget": 0.12,
            "rule": "chi2_closed_form",
            "generator": "point_mass",
            "method": "extended_fast",
            "n": 40,
            "problem": { "family": "exponential_linear", "dim": 4 }
        }"#;
        let config: ExperimentConfig = serde_json::from_str(budget).unwrap();
        let plan = config.plan().unwrap();
        assert_eq!(plan.config.alpha, 0.06);
        assert_eq!(plan.config.beta, 0.06);
        assert!(matches!(plan.truth, TrueDistribution::Exponential { .. }));

        let joint = r#"{
            "epsilon": 0.05,
            "alpha": 0.05,
            "beta": 0.01,
            "rule": "cauchy_schwarz_bound",
            "generator": "point_mass",
            "method": "extended_so",
            "n": 50,
            "problem": {
                "family": "gaussian_joint_linear",
                "dim": 10,
                "m": 3,
                "a": [5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0,
                      5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0,
                      5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0]
            }
        }"#;
        let config: ExperimentConfig = serde_json::from_str(joint).unwrap();
        let plan = config.plan().unwrap();
        assert_eq!(plan.config.problem.decision_dim(), 10);
        assert_eq!(plan.config.problem.uncertainty_family().dim(), 30);

        let missing_m = r#"{
            "epsilon": 0.05,
            "alpha": 0.05,
            "beta": 0.01,
            "rule": "cauchy_schwarz_bound",
            "generator": "point_mass",
            "method": "extended_so",
            "n": 50,
            "problem": { "family": "gaussian_joint_linear", "dim": 10 }
        }"#;
        let config: ExperimentConfig = serde_json::from_str(missing_m).unwrap();
        assert!(config.plan().is_err());

        let conflicting = r#"{
            "epsilon": 0.05,
            "alpha": 0.05,
            "beta": 0.01,
            "confidence_budget": 0.12,
            "rule": "cauchy_schwarz_bound",
            "generator": "point_mass",
            "method": "extended_so",
            "n": 50,
            "problem": { "family": "gaussian_single_linear", "dim": 4 }
        }"#;
        let config: ExperimentConfig = serde_json::from_str(conflicting).unwrap();
        assert!(config.plan().is_err());
    }

    #[test]
    fn failed_trials_are_counted_and_excluded() {
        // b < 0 makes the origin infeasible for the FAST anchor check, so
        // every trial fails with an error status.
        let plan = ExperimentPlan {
            config: PipelineConfig {
                epsilon: 0.1,
                alpha: 0.05,
                beta: 0.01,
                rule: ToleranceRule::CauchySchwarzBound,
                generator: GeneratorKind::PointMass,
                method: Method::ExtendedFast,
                problem: ProblemSpec::SingleLinear {
                    family: GaussianFamily::identity(2),
                    a: DVector::from_element(2, 5.0),
                    b: -1.0,
                    c: DVector::from_element(2, -1.0),
                },
            },
            truth: TrueDistribution::Gaussian {
                theta: DVector::zeros(2),
            },
            n: 30,
            mc_violation_draws: 100,
        };
        let reports = run_trials(&plan, 2, 1).unwrap();
        assert!(reports.iter().all(|r| r.status.starts_with("error:")));
        assert!(summarize(&plan, &reports).is_err());
    }

    #[test]
    fn mismatched_truth_is_rejected() {
        let mut plan = single_linear_plan(3, 20);
        plan.truth = TrueDistribution::Exponential {
            rates: ExponentialFamilyRates::new(DVector::from_element(3, 1.0)).unwrap(),
        };
        assert!(plan.validate().is_err());

        let mut plan = single_linear_plan(3, 20);
        plan.truth = TrueDistribution::Gaussian {
            theta: DVector::zeros(4),
        };
        assert!(plan.validate().is_err());
    }
}
