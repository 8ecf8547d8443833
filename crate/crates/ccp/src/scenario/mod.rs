//! Scenario-program assembly and solving.
//!
//! A [`ScenarioProgram`] is a convex program whose constraint rows come from
//! Monte Carlo samples: one row (or row block) per draw, plus optional
//! nonnegativity bounds. Builders cover the four experiment families: a
//! single linear constraint with a perturbed normal vector, a joint linear
//! system with a perturbed matrix, the same with a quadratic objective, and
//! a quadratic constraint with sampled PSD forms. [`solve`] is a log-barrier
//! interior-point method; [`fast_solve`] implements the two-stage procedure
//! that solves a small first stage and then shrinks the solution toward a
//! robustly feasible anchor until a larger validation batch is satisfied.

mod solver;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub use solver::solve;

/// Objective of a scenario program, minimized over the feasible set.
#[derive(Clone, Debug, PartialEq)]
pub enum Objective {
    /// cᵀx
    Linear { c: DVector<f64> },
    /// ½ xᵀHx + cᵀx with H PSD
    Quadratic { h: DMatrix<f64>, c: DVector<f64> },
}

impl Objective {
    pub fn dim(&self) -> usize {
        match self {
            Objective::Linear { c } => c.len(),
            Objective::Quadratic { c, .. } => c.len(),
        }
    }
}

/// A single inequality constraint.
#[derive(Clone, Debug, PartialEq)]
pub enum Constraint {
    /// gᵀx ≤ h
    LinearRow { g: DVector<f64>, h: f64 },
    /// xᵀQx + gᵀx ≤ h with Q PSD
    QuadraticForm {
        q: DMatrix<f64>,
        g: DVector<f64>,
        h: f64,
    },
}

impl Constraint {
    /// Constraint value minus its right-hand side; positive means violated.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        match self {
            Constraint::LinearRow { g, h } => g.dot(x) - h,
            Constraint::QuadraticForm { q, g, h } => (q * x).dot(x) + g.dot(x) - h,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Constraint::LinearRow { g, .. } => g.len(),
            Constraint::QuadraticForm { g, .. } => g.len(),
        }
    }
}

/// An immutable convex program assembled from scenario samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioProgram {
    pub objective: Objective,
    pub constraints: Vec<Constraint>,
    /// Per-coordinate nonnegativity flags; `true` adds the bound xⱼ ≥ 0.
    pub nonneg: Vec<bool>,
}

impl ScenarioProgram {
    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    /// Objective value at `x`, without the solver's internal tie-breaking term.
    pub fn objective_value(&self, x: &DVector<f64>) -> f64 {
        match &self.objective {
            Objective::Linear { c } => c.dot(x),
            Objective::Quadratic { h, c } => 0.5 * (h * x).dot(x) + c.dot(x),
        }
    }

    /// Largest constraint violation at `x`, bounds included; ≤ 0 means feasible.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for con in &self.constraints {
            worst = worst.max(con.violation(x));
        }
        for (j, flag) in self.nonneg.iter().enumerate() {
            if *flag {
                worst = worst.max(-x[j]);
            }
        }
        if worst == f64::NEG_INFINITY {
            0.0
        } else {
            worst
        }
    }

    fn check_consistent(&self, op: &'static str) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::invalid(op, "program dimension must be positive"));
        }
        if let Objective::Quadratic { h, .. } = &self.objective {
            if h.nrows() != d || h.ncols() != d {
                return Err(Error::DimensionMismatch {
                    op,
                    expected: d,
                    got: h.nrows(),
                });
            }
        }
        if self.nonneg.len() != d {
            return Err(Error::DimensionMismatch {
                op,
                expected: d,
                got: self.nonneg.len(),
            });
        }
        for con in &self.constraints {
            if con.dim() != d {
                return Err(Error::DimensionMismatch {
                    op,
                    expected: d,
                    got: con.dim(),
                });
            }
            if let Constraint::QuadraticForm { q, .. } = con {
                if q.nrows() != d || q.ncols() != d {
                    return Err(Error::DimensionMismatch {
                        op,
                        expected: d,
                        got: q.nrows(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Writes the program in a line-oriented text form, one constraint per
    /// line. Debugging aid only; the format is not stability-guaranteed.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let push_vals = |out: &mut String, vals: &mut dyn Iterator<Item = f64>| {
            for v in vals {
                let _ = write!(out, " {v}");
            }
        };
        let _ = write!(out, "dim {}", self.dim());
        out.push('\n');
        match &self.objective {
            Objective::Linear { c } => {
                out.push_str("objective linear");
                push_vals(&mut out, &mut c.iter().copied());
            }
            Objective::Quadratic { h, c } => {
                out.push_str("objective quadratic");
                push_vals(&mut out, &mut h.transpose().iter().copied());
                push_vals(&mut out, &mut c.iter().copied());
            }
        }
        out.push('\n');
        out.push_str("bounds");
        for flag in &self.nonneg {
            out.push_str(if *flag { " 1" } else { " 0" });
        }
        out.push('\n');
        for con in &self.constraints {
            match con {
                Constraint::LinearRow { g, h } => {
                    out.push_str("row");
                    push_vals(&mut out, &mut g.iter().copied());
                    let _ = write!(out, " {h}");
                }
                Constraint::QuadraticForm { q, g, h } => {
                    out.push_str("quad");
                    push_vals(&mut out, &mut q.transpose().iter().copied());
                    push_vals(&mut out, &mut g.iter().copied());
                    let _ = write!(out, " {h}");
                }
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads a program written by [`ScenarioProgram::dump`].
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut lines = text.lines().enumerate();
        let mut next_line = || {
            lines
                .next()
                .ok_or_else(|| Error::Data("program file ended early".into()))
        };
        let parse_floats = |line_no: usize, parts: &[&str]| -> Result<Vec<f64>> {
            parts
                .iter()
                .map(|p| {
                    p.parse::<f64>()
                        .map_err(|_| Error::Data(format!("line {}: bad number {p:?}", line_no + 1)))
                })
                .collect()
        };

        let (no, dim_line) = next_line()?;
        let dim_parts: Vec<&str> = dim_line.split_whitespace().collect();
        let dim: usize = match dim_parts.as_slice() {
            ["dim", n] => n
                .parse()
                .map_err(|_| Error::Data(format!("line {}: bad dimension", no + 1)))?,
            _ => return Err(Error::Data(format!("line {}: expected dim header", no + 1))),
        };
        if dim == 0 {
            return Err(Error::Data("program dimension must be positive".into()));
        }

        let (no, obj_line) = next_line()?;
        let parts: Vec<&str> = obj_line.split_whitespace().collect();
        let objective = match parts.as_slice() {
            ["objective", "linear", rest @ ..] if rest.len() == dim => Objective::Linear {
                c: DVector::from_vec(parse_floats(no, rest)?),
            },
            ["objective", "quadratic", rest @ ..] if rest.len() == dim * dim + dim => {
                let vals = parse_floats(no, rest)?;
                Objective::Quadratic {
                    h: DMatrix::from_row_slice(dim, dim, &vals[..dim * dim]),
                    c: DVector::from_column_slice(&vals[dim * dim..]),
                }
            }
            _ => {
                return Err(Error::Data(format!(
                    "line {}: expected an objective with {dim} coefficients",
                    no + 1
                )))
            }
        };

        let (no, bounds_line) = next_line()?;
        let parts: Vec<&str> = bounds_line.split_whitespace().collect();
        let nonneg = match parts.as_slice() {
            ["bounds", rest @ ..] if rest.len() == dim => rest
                .iter()
                .map(|p| match *p {
                    "1" => Ok(true),
                    "0" => Ok(false),
                    other => Err(Error::Data(format!(
                        "line {}: bad bound flag {other:?}",
                        no + 1
                    ))),
                })
                .collect::<Result<Vec<bool>>>()?,
            _ => {
                return Err(Error::Data(format!(
                    "line {}: expected {dim} bound flags",
                    no + 1
                )))
            }
        };

        let mut constraints = Vec::new();
        for (no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let con = match parts.as_slice() {
                ["row", rest @ ..] if rest.len() == dim + 1 => {
                    let vals = parse_floats(no, rest)?;
                    Constraint::LinearRow {
                        g: DVector::from_column_slice(&vals[..dim]),
                        h: vals[dim],
                    }
                }
                ["quad", rest @ ..] if rest.len() == dim * dim + dim + 1 => {
                    let vals = parse_floats(no, rest)?;
                    Constraint::QuadraticForm {
                        q: DMatrix::from_row_slice(dim, dim, &vals[..dim * dim]),
                        g: DVector::from_column_slice(&vals[dim * dim..dim * dim + dim]),
                        h: vals[dim * dim + dim],
                    }
                }
                _ => {
                    return Err(Error::Data(format!(
                        "line {}: unrecognized constraint line",
                        no + 1
                    )))
                }
            };
            constraints.push(con);
        }

        Ok(ScenarioProgram {
            objective,
            constraints,
            nonneg,
        })
    }
}

/// Outcome classification of a solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    ToleranceNotMet,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::ToleranceNotMet => "tolerance_not_met",
        };
        f.write_str(name)
    }
}

/// Result of solving a scenario program.
#[derive(Clone, Debug)]
pub struct Solution {
    pub x: DVector<f64>,
    pub objective_value: f64,
    pub status: SolveStatus,
    pub kkt_residual: f64,
}

/// Validates that `m` is symmetric PSD (eigenvalues ≥ -1e-10) and returns a
/// clipped copy with all eigenvalues nonnegative.
fn checked_psd(op: &'static str, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            op,
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    let scale = m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    if !scale.is_finite() {
        return Err(Error::invalid(op, "matrix has non-finite entries"));
    }
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::invalid(
                    op,
                    format!("matrix is not symmetric at ({i}, {j})"),
                ));
            }
        }
    }
    let sym = 0.5 * (m + m.transpose());
    let eig = SymmetricEigen::new(sym);
    if let Some(min) = eig
        .eigenvalues
        .iter()
        .copied()
        .min_by(|a, b| a.total_cmp(b))
    {
        if min < -1e-10 {
            return Err(Error::invalid(
                op,
                format!("matrix is not PSD: smallest eigenvalue {min:e}"),
            ));
        }
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let rebuilt = &eig.eigenvectors
        * DMatrix::from_diagonal(&clipped)
        * eig.eigenvectors.transpose();
    Ok(0.5 * (&rebuilt + rebuilt.transpose()))
}

fn check_finite_vec(op: &'static str, name: &str, v: &DVector<f64>) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(op, format!("{name} has non-finite entries")));
    }
    Ok(())
}

/// Program for P((a+ξ)ᵀx ≤ b) with objective cᵀx: one linear row per sample
/// row, plus x ≥ 0.
pub fn build_single_linear(
    a: &DVector<f64>,
    b: f64,
    c: &DVector<f64>,
    samples: &DMatrix<f64>,
) -> Result<ScenarioProgram> {
    const OP: &str = "build_single_linear";
    let d = a.len();
    if d == 0 {
        return Err(Error::invalid(OP, "dimension must be positive"));
    }
    if c.len() != d {
        return Err(Error::DimensionMismatch {
            op: OP,
            expected: d,
            got: c.len(),
        });
    }
    if samples.ncols() != d {
        return Err(Error::DimensionMismatch {
            op: OP,
            expected: d,
            got: samples.ncols(),
        });
    }
    check_finite_vec(OP, "a", a)?;
    check_finite_vec(OP, "c", c)?;
    if !b.is_finite() {
        return Err(Error::invalid(OP, "b must be finite"));
    }
    let constraints = (0..samples.nrows())
        .map(|i| Constraint::LinearRow {
            g: a + samples.row(i).transpose(),
            h: b,
        })
        .collect();
    Ok(ScenarioProgram {
        objective: Objective::Linear { c: c.clone() },
        constraints,
        nonneg: vec![true; d],
    })
}

/// Program for P((A+Ξ)x ≤ b) with objective cᵀx: m linear rows per sampled
/// matrix, plus x ≥ 0.
pub fn build_joint_linear(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    samples: &[DMatrix<f64>],
) -> Result<ScenarioProgram> {
    const OP: &str = "build_joint_linear";
    let (m, d) = (a.nrows(), a.ncols());
    if m == 0 || d == 0 {
        return Err(Error::invalid(OP, "A must be nonempty"));
    }
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            op: OP,
            expected: m,
            got: b.len(),
        });
    }
    if c.len() != d {
        return Err(Error::DimensionMismatch {
            op: OP,
            expected: d,
            got: c.len(),
        });
    }
    check_finite_vec(OP, "b", b)?;
    check_finite_vec(OP, "c", c)?;
    let mut constraints = Vec::with_capacity(m * samples.len());
    for xi in samples {
        if xi.nrows() != m || xi.ncols() != d {
            return Err(Error::DimensionMismatch {
                op: OP,
                expected: m * d,
                got: xi.nrows() * xi.ncols(),
            });
        }
        let rows = a + xi;
        for j in 0..m {
            constraints.push(Constraint::LinearRow {
                g: rows.row(j).transpose(),
                h: b[j],
            });
        }
    }
    Ok(ScenarioProgram {
        objective: Objective::Linear { c: c.clone() },
        constraints,
        nonneg: vec![true; d],
    })
}

/// Joint-linear constraints with objective ½xᵀHx + cᵀx; H must be PSD.
pub fn build_quadratic_objective(
    h: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    samples: &[DMatrix<f64>],
) -> Result<ScenarioProgram> {
    const OP: &str = "build_quadratic_objective";
    let linear = build_joint_linear(a, b, c, samples)?;
    if h.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            op: OP,
            expected: a.ncols(),
            got: h.nrows(),
        });
    }
    let h = checked_psd(OP, h)?;
    Ok(ScenarioProgram {
        objective: Objective::Quadratic {
            h,
            c: c.clone(),
        },
        constraints: linear.constraints,
        nonneg: linear.nonneg,
    })
}

/// Program for P(xᵀΞx + aᵀx ≤ b) with objective cᵀx: one quadratic form per
/// sampled PSD matrix, plus x ≥ 0. A sampled Ξ that is exactly zero emits a
/// plain linear row.
pub fn build_quadratic_constraint(
    a: &DVector<f64>,
    b: f64,
    c: &DVector<f64>,
    xis: &[DMatrix<f64>],
) -> Result<ScenarioProgram> {
    const OP: &str = "build_quadratic_constraint";
    let d = a.len();
    if d == 0 {
        return Err(Error::invalid(OP, "dimension must be positive"));
    }
    if c.len() != d {
        return Err(Error::DimensionMismatch {
            op: OP,
            expected: d,
            got: c.len(),
        });
    }
    check_finite_vec(OP, "a", a)?;
    check_finite_vec(OP, "c", c)?;
    if !b.is_finite() {
        return Err(Error::invalid(OP, "b must be finite"));
    }
    let mut constraints = Vec::with_capacity(xis.len());
    for xi in xis {
        if xi.nrows() != d || xi.ncols() != d {
            return Err(Error::DimensionMismatch {
                op: OP,
                expected: d,
                got: xi.nrows(),
            });
        }
        if xi.iter().all(|v| *v == 0.0) {
            constraints.push(Constraint::LinearRow { g: a.clone(), h: b });
            continue;
        }
        constraints.push(Constraint::QuadraticForm {
            q: checked_psd(OP, xi)?,
            g: a.clone(),
            h: b,
        });
    }
    Ok(ScenarioProgram {
        objective: Objective::Linear { c: c.clone() },
        constraints,
        nonneg: vec![true; d],
    })
}

/// Two-stage procedure: solve `stage1`, then pull its solution toward the
/// robustly feasible `x_bar` until every `stage2` constraint holds.
///
/// The returned point is x̄ + t*(x₁ − x̄) with t* the largest t in [0, 1]
/// keeping the stage-two batch satisfied: a ratio test per linear row and a
/// bisection to 1e-10 per quadratic form (the feasible t-set is an interval
/// containing 0). Stage-one failures are returned unchanged; an `x_bar`
/// violating the stage-two batch is an error.
pub fn fast_solve(
    stage1: &ScenarioProgram,
    stage2: &ScenarioProgram,
    x_bar: &DVector<f64>,
) -> Result<Solution> {
    const OP: &str = "fast_solve";
    let d = stage1.dim();
    if stage2.dim() != d {
        return Err(Error::DimensionMismatch {
            op: OP,
            expected: d,
            got: stage2.dim(),
        });
    }
    if x_bar.len() != d {
        return Err(Error::DimensionMismatch {
            op: OP,
            expected: d,
            got: x_bar.len(),
        });
    }
    let anchor_violation = stage2.max_violation(x_bar);
    if anchor_violation > 1e-9 {
        return Err(Error::invalid(
            OP,
            format!("x_bar violates the stage-two batch by {anchor_violation:e}"),
        ));
    }

    let stage_one = solve(stage1)?;
    if stage_one.status != SolveStatus::Optimal {
        return Ok(stage_one);
    }
    let x1 = &stage_one.x;
    let step = x1 - x_bar;

    let mut t_star = 1.0f64;
    for con in &stage2.constraints {
        let at = |t: f64| con.violation(&(x_bar + t * &step));
        if at(1.0) <= 0.0 {
            continue;
        }
        let t_con = match con {
            Constraint::LinearRow { g, h } => {
                let v0 = g.dot(x_bar) - h;
                let v1 = g.dot(x1) - h;
                (h - g.dot(x_bar)) / (v1 - v0)
            }
            Constraint::QuadraticForm { .. } => largest_feasible_t(&at),
        };
        t_star = t_star.min(t_con.clamp(0.0, 1.0));
    }
    for (j, flag) in stage2.nonneg.iter().enumerate() {
        if *flag && x1[j] < 0.0 && x_bar[j] >= 0.0 {
            let t_con = x_bar[j] / (x_bar[j] - x1[j]);
            t_star = t_star.min(t_con.clamp(0.0, 1.0));
        }
    }

    let x = x_bar + t_star * &step;
    let objective_value = stage1.objective_value(&x);
    Ok(Solution {
        x,
        objective_value,
        status: SolveStatus::Optimal,
        kkt_residual: stage_one.kkt_residual,
    })
}

/// Largest t in [0, 1] with violation(t) ≤ 0, for a convex violation profile
/// that is nonpositive at 0 and positive at 1. Bisection to 1e-10.
fn largest_feasible_t(violation: &dyn Fn(f64) -> f64) -> f64 {
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if violation(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
