//! End-to-end procedures tying the pieces together.
//!
//! Both entry points run the same front half: fit the parametric model to the
//! observed sample, wrap the estimate in a chi-square-calibrated divergence
//! ball, pick a generating distribution centered at the fit, translate the
//! violation tolerance through the configured rule, and convert the tightened
//! tolerance into a Monte Carlo scenario count. They differ in the back half:
//!
//! - [`extended_so`] draws the full scenario budget and solves one program;
//! - [`extended_fast`] draws the two-stage split, solves the small first
//!   stage, and pulls the solution toward the origin until the second-stage
//!   batch is satisfied.
//!
//! [`improved_generator_search`] compares the candidate generating
//! distributions by their worst-case divergence over the calibrated set and
//! returns the cheapest one; it never does worse than the point mass.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::divergence::{select_delta, DivergenceKind, ToleranceRule};
use crate::error::{Error, Result};
use crate::generating::{blend_search, d_data_general, GeneratingDistribution, RadialNominal};
use crate::models::{
    calibrate, mle, ExponentialFamilyRates, Family, GaussianFamily, UncertaintySet,
};
use crate::sampler::{sample_exponential, sample_generating, SeededStream};
use crate::scenario::{
    build_joint_linear, build_quadratic_constraint, build_quadratic_objective,
    build_single_linear, fast_solve, solve, ScenarioProgram, Solution,
};
use crate::sizes::{fast_sizes, n_exact, SizeRequest};

/// Hard cap on the number of scenarios materialized in memory per run.
const SCENARIO_LIMIT: u64 = 5_000_000;

/// Grid resolution of the blend-weight search in
/// [`improved_generator_search`].
const BLEND_GRID: usize = 9;

const BETA_NOTE: &str =
    "the scenario count grows only logarithmically as beta shrinks, so tightening beta is cheap";

/// Which end-to-end procedure to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// One scenario program on the full Monte Carlo budget.
    ExtendedSo,
    /// Two-stage split: small stage-1 solve, then a feasibility pullback
    /// against the stage-2 batch.
    ExtendedFast,
}

/// Generating-distribution selector. The concrete distribution is centered at
/// the fitted parameter once the model has been estimated, with mixture
/// parameters tied to the calibrated set: the sphere radius is the whitened
/// ball radius `sqrt(lambda)` and the Gaussian mixing covariance is `Sigma/n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    PointMass,
    SphereMixture,
    GaussianMixture,
    /// Pick the candidate (including blends with the point mass) with the
    /// smallest worst-case divergence.
    Improved,
}

/// A chance-constrained program family together with its fixed data. The
/// uncertain quantity is always additive noise on the constraint data; the
/// decision dimension is the length of `c`.
#[derive(Debug, Clone)]
pub enum ProblemSpec {
    /// P((a + xi)' x <= b) >= 1 - eps with xi Gaussian on R^d.
    SingleLinear {
        family: GaussianFamily,
        a: DVector<f64>,
        b: f64,
        c: DVector<f64>,
    },
    /// P((A + Xi) x <= b componentwise) >= 1 - eps; Xi is an m-by-d Gaussian
    /// matrix whose rows are stacked into a single parameter vector of
    /// length m*d, reshaped row-major when drawing.
    JointLinear {
        family: GaussianFamily,
        a: DMatrix<f64>,
        b: DVector<f64>,
        c: DVector<f64>,
    },
    /// Joint linear constraints with objective 0.5 x'Hx + c'x.
    QuadraticObjective {
        family: GaussianFamily,
        h: DMatrix<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
        c: DVector<f64>,
    },
    /// P(x' Xi x + a' x <= b) >= 1 - eps where each scenario Xi is the
    /// average of m outer products of Gaussian draws.
    QuadraticConstraint {
        family: GaussianFamily,
        a: DVector<f64>,
        b: f64,
        c: DVector<f64>,
        m: usize,
    },
    /// P((a + xi)' x <= b) >= 1 - eps with xi a vector of independent
    /// exponentials; the unknown parameter is the rate vector.
    ExponentialLinear {
        a: DVector<f64>,
        b: f64,
        c: DVector<f64>,
    },
}

impl ProblemSpec {
    /// Number of decision variables.
    pub fn decision_dim(&self) -> usize {
        match self {
            ProblemSpec::SingleLinear { c, .. }
            | ProblemSpec::JointLinear { c, .. }
            | ProblemSpec::QuadraticObjective { c, .. }
            | ProblemSpec::QuadraticConstraint { c, .. }
            | ProblemSpec::ExponentialLinear { c, .. } => c.len(),
        }
    }

    /// The parametric family of the uncertain quantity. Its dimension is the
    /// dimension of the parameter being estimated, which for the joint
    /// families is m*d rather than d.
    pub fn uncertainty_family(&self) -> Family {
        match self {
            ProblemSpec::SingleLinear { family, .. }
            | ProblemSpec::JointLinear { family, .. }
            | ProblemSpec::QuadraticObjective { family, .. }
            | ProblemSpec::QuadraticConstraint { family, .. } => {
                Family::Gaussian(family.clone())
            }
            ProblemSpec::ExponentialLinear { a, .. } => Family::Exponential { dim: a.len() },
        }
    }

    fn check(&self) -> Result<()> {
        let fail = |detail: String| Err(Error::invalid("ProblemSpec", detail));
        match self {
            ProblemSpec::SingleLinear { family, a, c, .. } => {
                if a.len() != c.len() {
                    return fail(format!(
                        "a has length {} but c has length {}",
                        a.len(),
                        c.len()
                    ));
                }
                if family.dim() != a.len() {
                    return fail(format!(
                        "covariance dimension {} does not match a of length {}",
                        family.dim(),
                        a.len()
                    ));
                }
            }
            ProblemSpec::JointLinear { family, a, b, c }
            | ProblemSpec::QuadraticObjective { family, a, b, c, .. } => {
                if a.ncols() != c.len() {
                    return fail(format!(
                        "A has {} columns but c has length {}",
                        a.ncols(),
                        c.len()
                    ));
                }
                if b.len() != a.nrows() {
                    return fail(format!(
                        "A has {} rows but b has length {}",
                        a.nrows(),
                        b.len()
                    ));
                }
                if a.nrows() == 0 {
                    return fail("A must have at least one row".into());
                }
                if family.dim() != a.nrows() * a.ncols() {
                    return fail(format!(
                        "covariance dimension {} does not match the {}x{} matrix parameter",
                        family.dim(),
                        a.nrows(),
                        a.ncols()
                    ));
                }
                if let ProblemSpec::QuadraticObjective { h, .. } = self {
                    if h.nrows() != c.len() || h.ncols() != c.len() {
                        return fail(format!(
                            "H is {}x{} but the decision dimension is {}",
                            h.nrows(),
                            h.ncols(),
                            c.len()
                        ));
                    }
                }
            }
            ProblemSpec::QuadraticConstraint { family, a, c, m, .. } => {
                if a.len() != c.len() {
                    return fail(format!(
                        "a has length {} but c has length {}",
                        a.len(),
                        c.len()
                    ));
                }
                if family.dim() != a.len() {
                    return fail(format!(
                        "covariance dimension {} does not match a of length {}",
                        family.dim(),
                        a.len()
                    ));
                }
                if *m == 0 {
                    return fail("the outer-product average needs m >= 1 draws".into());
                }
            }
            ProblemSpec::ExponentialLinear { a, c, .. } => {
                if a.len() != c.len() {
                    return fail(format!(
                        "a has length {} but c has length {}",
                        a.len(),
                        c.len()
                    ));
                }
                if a.is_empty() {
                    return fail("the problem needs at least one variable".into());
                }
            }
        }
        Ok(())
    }
}

/// Everything the end-to-end procedures need besides the data: risk levels,
/// translation rule, generator choice, method, and the problem instance.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub rule: ToleranceRule,
    pub generator: GeneratorKind,
    pub method: Method,
    pub problem: ProblemSpec,
}

impl PipelineConfig {
    /// Splits a total confidence budget evenly: alpha = beta = budget / 2.
    pub fn split_budget(budget: f64) -> (f64, f64) {
        (budget / 2.0, budget / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(
                    "PipelineConfig",
                    format!("{name} must lie in (0, 1), got {v}"),
                ));
            }
        }
        self.problem.check()
    }
}

/// Record of one end-to-end run: the fitted model, the calibration, the
/// translated tolerance, the scenario budget, and the solver outcome.
/// Serializes to JSON deterministically for a given (data, config, seed).
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub method: Method,
    pub rule: ToleranceRule,
    pub generator: String,
    /// Observed sample size the model was fitted on.
    pub n: usize,
    pub decision_dim: usize,
    pub uncertainty_dim: usize,
    pub theta_hat: Vec<f64>,
    /// Calibrated divergence-ball radius.
    pub lambda: f64,
    /// Worst-case divergence of the generating distribution over the set;
    /// absent when the translation consumed the raw radius instead.
    pub d_data: Option<f64>,
    /// Translated Monte Carlo violation tolerance.
    pub delta_eps: f64,
    /// Total scenario draws backing the solution.
    pub n_scenarios: u64,
    /// Stage split `[n1, n2]` for the two-stage method; absent otherwise.
    pub stage_sizes: Option<[u64; 2]>,
    /// Scenario count that plain scenario optimization at the original
    /// tolerance would need.
    pub n_exact_direct: u64,
    /// Set when the observed sample alone already meets `n_exact_direct`.
    pub warning: Option<String>,
    /// Overall guarantee level 1 - alpha - beta.
    pub confidence: f64,
    pub beta_note: &'static str,
    pub solver_status: String,
    pub objective_value: f64,
    pub kkt_residual: f64,
}

/// Worst-case chi-square divergence of a generating distribution over a
/// calibrated uncertainty set.
///
/// The point mass has the closed form `exp(lambda) - 1`; every other shape
/// goes through the radial quadrature. Only Gaussian families are supported:
/// the mixture profiles are defined in whitened Gaussian coordinates.
pub fn generator_d_data(gen: &GeneratingDistribution, set: &UncertaintySet) -> Result<f64> {
    match &set.family {
        Family::Exponential { .. } => Err(Error::Unsupported(
            "worst-case divergence of a generating distribution requires a Gaussian family"
                .into(),
        )),
        Family::Gaussian(family) => {
            if gen.dim() != family.dim() {
                return Err(Error::DimensionMismatch {
                    op: "generator_d_data",
                    expected: family.dim(),
                    got: gen.dim(),
                });
            }
            match gen {
                GeneratingDistribution::PointMass { .. } => Ok(set.radius.exp_m1()),
                _ => d_data_general(&RadialNominal::for_generating(gen)?, set),
            }
        }
    }
}

fn improved_search_inner(
    theta_hat: &DVector<f64>,
    set: &UncertaintySet,
    n: usize,
) -> Result<(GeneratingDistribution, f64)> {
    let point = GeneratingDistribution::point_mass(theta_hat.clone());
    let mut best_gen = point.clone();
    let mut best_value = set.radius.exp_m1();
    let proposals = [
        GeneratingDistribution::sphere_mixture(theta_hat.clone(), set.radius.sqrt())?,
        GeneratingDistribution::gaussian_mixture(theta_hat.clone(), 1.0 / n as f64)?,
    ];
    for proposal in proposals {
        let value = generator_d_data(&proposal, set)?;
        if value < best_value {
            best_value = value;
            best_gen = proposal.clone();
        }
        match blend_search(&point, &proposal, set, BLEND_GRID) {
            Ok((weight, value)) if value < best_value => {
                best_value = value;
                best_gen = GeneratingDistribution::blend(weight, point.clone(), proposal)?;
            }
            Ok(_) => {}
            // A proposal without strict descent at t = 0 is simply not a
            // candidate for blending; the point mass remains available.
            Err(Error::InvalidArgument { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok((best_gen, best_value))
}

/// Compares the point mass, the sphere mixture, the Gaussian mixture, and
/// blends of each mixture with the point mass, by worst-case divergence over
/// the calibrated set; returns the argmin.
///
/// The result never has a larger worst-case divergence than the point mass.
/// Requires a Gaussian family.
pub fn improved_generator_search(
    data: &DMatrix<f64>,
    config: &PipelineConfig,
) -> Result<GeneratingDistribution> {
    config.validate()?;
    let family = config.problem.uncertainty_family();
    if matches!(family, Family::Exponential { .. }) {
        return Err(Error::Unsupported(
            "improved generator search requires a Gaussian family".into(),
        ));
    }
    check_data(data, &family)?;
    let theta_hat = mle(&family, data)?;
    let set = calibrate(&family, &theta_hat, data.nrows(), config.alpha, DivergenceKind::Chi2)?;
    Ok(improved_search_inner(&theta_hat, &set, data.nrows())?.0)
}

fn check_data(data: &DMatrix<f64>, family: &Family) -> Result<()> {
    if data.nrows() == 0 {
        return Err(Error::invalid("pipeline", "the data sample is empty"));
    }
    if data.ncols() != family.dim() {
        return Err(Error::DimensionMismatch {
            op: "pipeline",
            expected: family.dim(),
            got: data.ncols(),
        });
    }
    Ok(())
}

fn realize_generator(
    kind: GeneratorKind,
    theta_hat: &DVector<f64>,
    set: &UncertaintySet,
    n: usize,
) -> Result<GeneratingDistribution> {
    let gaussian = matches!(set.family, Family::Gaussian(_));
    match kind {
        GeneratorKind::PointMass => Ok(GeneratingDistribution::point_mass(theta_hat.clone())),
        GeneratorKind::SphereMixture if gaussian => {
            GeneratingDistribution::sphere_mixture(theta_hat.clone(), set.radius.sqrt())
        }
        GeneratorKind::GaussianMixture if gaussian => {
            GeneratingDistribution::gaussian_mixture(theta_hat.clone(), 1.0 / n as f64)
        }
        GeneratorKind::Improved if gaussian => {
            Ok(improved_search_inner(theta_hat, set, n)?.0)
        }
        _ => Err(Error::Unsupported(
            "mixture generating distributions require a Gaussian family".into(),
        )),
    }
}

fn generator_label(gen: &GeneratingDistribution) -> String {
    match gen {
        GeneratingDistribution::PointMass { .. } => "point_mass".into(),
        GeneratingDistribution::SphereMixture { radius, .. } => {
            format!("sphere_mixture(radius={radius})")
        }
        GeneratingDistribution::GaussianMixture { scale, .. } => {
            format!("gaussian_mixture(scale={scale})")
        }
        GeneratingDistribution::Blend {
            weight,
            base,
            proposal,
        } => format!(
            "blend(weight={weight}, base={}, proposal={})",
            generator_label(base),
            generator_label(proposal)
        ),
    }
}

/// Front half shared by both procedures: everything up to and including the
/// translated tolerance and the degeneracy check.
struct Translation {
    theta_hat: DVector<f64>,
    lambda: f64,
    generator: GeneratingDistribution,
    d_data: Option<f64>,
    delta_eps: f64,
    n: usize,
    decision_dim: usize,
    uncertainty_dim: usize,
    n_exact_direct: u64,
    warning: Option<String>,
}

fn translate(data: &DMatrix<f64>, config: &PipelineConfig) -> Result<Translation> {
    config.validate()?;
    let family = config.problem.uncertainty_family();
    check_data(data, &family)?;
    let n = data.nrows();
    let theta_hat = mle(&family, data)?;
    let set = calibrate(&family, &theta_hat, n, config.alpha, DivergenceKind::Chi2)?;
    let generator = realize_generator(config.generator, &theta_hat, &set, n)?;

    let (consumed, d_data) = match config.rule {
        ToleranceRule::CauchySchwarzBound => {
            let v = generator_d_data(&generator, &set)?;
            (v, Some(v))
        }
        ToleranceRule::Chi2ClosedForm => match &generator {
            GeneratingDistribution::PointMass { .. } => (set.radius, None),
            _ => {
                let v = generator_d_data(&generator, &set)?;
                (v, Some(v))
            }
        },
    };
    let delta_eps = select_delta(config.epsilon, consumed, config.rule)?;

    let decision_dim = config.problem.decision_dim();
    let direct_req = SizeRequest::new(config.epsilon, config.beta, decision_dim as u32)?;
    let n_exact_direct = n_exact(&direct_req)?;
    let warning = if n as u64 >= n_exact_direct {
        Some(format!(
            "the observed sample (n = {n}) already meets the plain scenario requirement \
             N_exact = {n_exact_direct}; direct scenario optimization on the data suffices"
        ))
    } else {
        None
    };

    Ok(Translation {
        theta_hat,
        lambda: set.radius,
        generator,
        d_data,
        delta_eps,
        n,
        decision_dim,
        uncertainty_dim: family.dim(),
        n_exact_direct,
        warning,
    })
}

fn check_budget(op: &'static str, count: u64) -> Result<()> {
    if count > SCENARIO_LIMIT {
        return Err(Error::SizeOverflow {
            limit: SCENARIO_LIMIT,
            detail: format!("{op} would materialize {count} scenario draws"),
        });
    }
    Ok(())
}

fn reshape_rows(flat: &DMatrix<f64>, rows: usize, cols: usize) -> Vec<DMatrix<f64>> {
    (0..flat.nrows())
        .map(|i| DMatrix::from_fn(rows, cols, |r, c| flat[(i, r * cols + c)]))
        .collect()
}

fn draw_program(
    problem: &ProblemSpec,
    gen: &GeneratingDistribution,
    count: u64,
    stream: &mut SeededStream,
) -> Result<ScenarioProgram> {
    let count = count as usize;
    match problem {
        ProblemSpec::SingleLinear { family, a, b, c } => {
            let samples = sample_generating(gen, family, count, stream)?;
            build_single_linear(a, *b, c, &samples)
        }
        ProblemSpec::JointLinear { family, a, b, c } => {
            let flat = sample_generating(gen, family, count, stream)?;
            let mats = reshape_rows(&flat, a.nrows(), a.ncols());
            build_joint_linear(a, b, c, &mats)
        }
        ProblemSpec::QuadraticObjective { family, h, a, b, c } => {
            let flat = sample_generating(gen, family, count, stream)?;
            let mats = reshape_rows(&flat, a.nrows(), a.ncols());
            build_quadratic_objective(h, a, b, c, &mats)
        }
        ProblemSpec::QuadraticConstraint {
            family, a, b, c, m, ..
        } => {
            let d = a.len();
            let mut xis = Vec::with_capacity(count);
            for _ in 0..count {
                let draws = sample_generating(gen, family, *m, stream)?;
                let mut q = DMatrix::zeros(d, d);
                for k in 0..*m {
                    let row = draws.row(k).transpose();
                    q.ger(1.0 / *m as f64, &row, &row, 1.0);
                }
                xis.push(q);
            }
            build_quadratic_constraint(a, *b, c, &xis)
        }
        ProblemSpec::ExponentialLinear { a, b, c } => {
            let theta = match gen {
                GeneratingDistribution::PointMass { theta } => theta,
                _ => {
                    return Err(Error::Unsupported(
                        "exponential scenarios require a point-mass generator".into(),
                    ))
                }
            };
            let rates = ExponentialFamilyRates::new(theta.clone())?;
            let samples = sample_exponential(&rates, count, stream)?;
            build_single_linear(a, *b, c, &samples)
        }
    }
}

fn report_from(
    t: &Translation,
    config: &PipelineConfig,
    method: Method,
    n_scenarios: u64,
    stage_sizes: Option<[u64; 2]>,
    solution: &Solution,
) -> RunReport {
    RunReport {
        method,
        rule: config.rule,
        generator: generator_label(&t.generator),
        n: t.n,
        decision_dim: t.decision_dim,
        uncertainty_dim: t.uncertainty_dim,
        theta_hat: t.theta_hat.iter().copied().collect(),
        lambda: t.lambda,
        d_data: t.d_data,
        delta_eps: t.delta_eps,
        n_scenarios,
        stage_sizes,
        n_exact_direct: t.n_exact_direct,
        warning: t.warning.clone(),
        confidence: 1.0 - config.alpha - config.beta,
        beta_note: BETA_NOTE,
        solver_status: solution.status.to_string(),
        objective_value: solution.objective_value,
        kkt_residual: solution.kkt_residual,
    }
}

/// Extended scenario optimization: fit, calibrate, translate, size, draw the
/// full budget, solve.
///
/// The scenario count is `n_exact(delta_eps, beta, d)` where `d` is the
/// decision dimension; the overall guarantee is `1 - alpha - beta`.
pub fn extended_so(
    data: &DMatrix<f64>,
    config: &PipelineConfig,
    stream: &mut SeededStream,
) -> Result<(Solution, RunReport)> {
    let t = translate(data, config)?;
    let req = SizeRequest::new(t.delta_eps, config.beta, t.decision_dim as u32)?;
    let n_scenarios = n_exact(&req)?;
    check_budget("extended_so", n_scenarios)?;
    let program = draw_program(&config.problem, &t.generator, n_scenarios, stream)?;
    let solution = solve(&program)?;
    let report = report_from(&t, config, Method::ExtendedSo, n_scenarios, None, &solution);
    Ok((solution, report))
}

/// Two-stage variant: same front half, but the budget is split into a small
/// stage-1 program and a stage-2 validation batch; the stage-1 solution is
/// pulled toward the origin until the batch is satisfied.
///
/// The origin must be robustly feasible (b > 0 in every family here), which
/// [`fast_solve`] verifies against the stage-2 constraints.
pub fn extended_fast(
    data: &DMatrix<f64>,
    config: &PipelineConfig,
    stream: &mut SeededStream,
) -> Result<(Solution, RunReport)> {
    let t = translate(data, config)?;
    let sizes = fast_sizes(t.delta_eps, config.beta, t.decision_dim as u32)?;
    check_budget("extended_fast", sizes.total())?;
    let stage1 = draw_program(&config.problem, &t.generator, sizes.n1, stream)?;
    let stage2 = draw_program(&config.problem, &t.generator, sizes.n2, stream)?;
    let x_bar = DVector::zeros(t.decision_dim);
    let solution = fast_solve(&stage1, &stage2, &x_bar)?;
    let report = report_from(
        &t,
        config,
        Method::ExtendedFast,
        sizes.total(),
        Some([sizes.n1, sizes.n2]),
        &solution,
    );
    Ok((solution, report))
}

/// Dispatches on `config.method`.
pub fn run(
    data: &DMatrix<f64>,
    config: &PipelineConfig,
    stream: &mut SeededStream,
) -> Result<(Solution, RunReport)> {
    match config.method {
        Method::ExtendedSo => extended_so(data, config, stream),
        Method::ExtendedFast => extended_fast(data, config, stream),
    }
}
