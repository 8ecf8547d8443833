//! Parametric families, estimation, and data-driven uncertainty sets.
//!
//! Two families are supported: a Gaussian with unknown mean and known
//! covariance, and a vector of independent exponentials with unknown rates.
//! An uncertainty set pairs the maximum-likelihood estimate with a
//! chi-square-calibrated divergence radius `lambda = phi''(1) q / (2n)`,
//! where `q` is the `1 - alpha` chi-square quantile at `dim` degrees of
//! freedom. For the Gaussian family the set has the explicit form
//! `{theta_hat + sqrt(ln(1 + lambda)) S v : ||v|| <= 1}` with `S` a square
//! root of the covariance, which `boundary_point` parametrizes directly.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::divergence::DivergenceKind;
use crate::error::{Error, Result};
use crate::numerics::chi2_quantile;

/// Gaussian family with known covariance; the mean is the free parameter.
#[derive(Clone, Debug)]
pub struct GaussianFamily {
    covariance: DMatrix<f64>,
    factor: DMatrix<f64>,
    cholesky: Cholesky<f64, Dyn>,
}

impl GaussianFamily {
    /// Validates symmetry (to 1e-12 relative to the largest entry) and
    /// positive definiteness, and caches the lower Cholesky factor.
    pub fn new(covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() == 0 || covariance.nrows() != covariance.ncols() {
            return Err(Error::invalid(
                "GaussianFamily",
                format!(
                    "covariance must be square and nonempty, got {}x{}",
                    covariance.nrows(),
                    covariance.ncols()
                ),
            ));
        }
        let scale = covariance.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if !scale.is_finite() {
            return Err(Error::invalid(
                "GaussianFamily",
                "covariance has non-finite entries",
            ));
        }
        for i in 0..covariance.nrows() {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::invalid(
                        "GaussianFamily",
                        format!("covariance is not symmetric at ({i}, {j})"),
                    ));
                }
            }
        }
        let cholesky = Cholesky::new(covariance.clone()).ok_or_else(|| {
            Error::invalid("GaussianFamily", "covariance is not positive definite")
        })?;
        let factor = cholesky.l();
        Ok(GaussianFamily {
            covariance,
            factor,
            cholesky,
        })
    }

    pub fn identity(dim: usize) -> Self {
        GaussianFamily::new(DMatrix::identity(dim, dim)).expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Lower-triangular factor L with L Lᵀ equal to the covariance.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Solves covariance * x = b.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.cholesky.solve(b)
    }

    /// The quadratic form deltaᵀ Σ⁻¹ delta.
    pub fn inv_quadratic(&self, delta: &DVector<f64>) -> f64 {
        self.solve(delta).dot(delta)
    }
}

/// Rates of a vector of independent exponentials.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentialFamilyRates {
    rates: DVector<f64>,
}

impl ExponentialFamilyRates {
    pub fn new(rates: DVector<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::invalid(
                "ExponentialFamilyRates",
                "at least one rate is required",
            ));
        }
        if let Some(bad) = rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::invalid(
                "ExponentialFamilyRates",
                format!("rates must be positive and finite, got {bad}"),
            ));
        }
        Ok(ExponentialFamilyRates { rates })
    }

    pub fn dim(&self) -> usize {
        self.rates.len()
    }

    pub fn rates(&self) -> &DVector<f64> {
        &self.rates
    }
}

/// The parametric family an uncertainty set lives over.
#[derive(Clone, Debug)]
pub enum Family {
    Gaussian(GaussianFamily),
    /// Independent exponentials; the rate vector is the unknown parameter.
    Exponential { dim: usize },
}

impl Family {
    pub fn dim(&self) -> usize {
        match self {
            Family::Gaussian(f) => f.dim(),
            Family::Exponential { dim } => *dim,
        }
    }
}

/// Divergence ball around an estimate, calibrated from the sample count.
#[derive(Clone, Debug)]
pub struct UncertaintySet {
    pub center: DVector<f64>,
    pub radius: f64,
    pub family: Family,
    pub divergence: DivergenceKind,
}

impl UncertaintySet {
    /// Whether `theta` lies in the set. Gaussian membership compares the
    /// chi-square divergence from the center against the radius; the
    /// exponential family uses the Fisher quadratic
    /// sum((theta_i - c_i)² / c_i²) at the center rates.
    pub fn contains(&self, theta: &DVector<f64>) -> Result<bool> {
        if theta.len() != self.family.dim() {
            return Err(Error::DimensionMismatch {
                op: "UncertaintySet::contains",
                expected: self.family.dim(),
                got: theta.len(),
            });
        }
        let gauge = match &self.family {
            Family::Gaussian(f) => chi2_gaussian(&self.center, theta, f)?,
            Family::Exponential { .. } => self
                .center
                .iter()
                .zip(theta.iter())
                .map(|(c, t)| ((t - c) / c).powi(2))
                .sum(),
        };
        Ok(gauge <= self.radius)
    }
}

/// Maximum-likelihood estimate: the coordinate-wise sample mean for the
/// Gaussian family, reciprocal sample means for the exponential rates.
pub fn mle(family: &Family, data: &DMatrix<f64>) -> Result<DVector<f64>> {
    if data.nrows() == 0 {
        return Err(Error::Data("cannot estimate from an empty sample".into()));
    }
    if data.ncols() != family.dim() {
        return Err(Error::DimensionMismatch {
            op: "mle",
            expected: family.dim(),
            got: data.ncols(),
        });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("sample matrix has non-finite entries".into()));
    }
    let n = data.nrows() as f64;
    let means = DVector::from_fn(data.ncols(), |j, _| data.column(j).sum() / n);
    match family {
        Family::Gaussian(_) => Ok(means),
        Family::Exponential { .. } => {
            if data.iter().any(|v| *v <= 0.0) {
                return Err(Error::Data(
                    "exponential observations must be positive".into(),
                ));
            }
            Ok(means.map(|m| 1.0 / m))
        }
    }
}

/// Builds the divergence ball of radius `phi''(1) q_{1-alpha, dim} / (2n)`
/// around `theta_hat`.
pub fn calibrate(
    family: &Family,
    theta_hat: &DVector<f64>,
    n: usize,
    alpha: f64,
    divergence: DivergenceKind,
) -> Result<UncertaintySet> {
    if n == 0 {
        return Err(Error::invalid("calibrate", "sample count must be positive"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(
            "calibrate",
            format!("alpha must lie in (0, 1), got {alpha}"),
        ));
    }
    if theta_hat.len() != family.dim() {
        return Err(Error::DimensionMismatch {
            op: "calibrate",
            expected: family.dim(),
            got: theta_hat.len(),
        });
    }
    if let Family::Exponential { .. } = family {
        if theta_hat.iter().any(|r| *r <= 0.0) {
            return Err(Error::invalid(
                "calibrate",
                "exponential rate estimates must be positive",
            ));
        }
    }
    let quantile = chi2_quantile(1.0 - alpha, family.dim() as u32)?;
    let radius = divergence.second_derivative_at_one() * quantile / (2.0 * n as f64);
    Ok(UncertaintySet {
        center: theta_hat.clone(),
        radius,
        family: family.clone(),
        divergence,
    })
}

/// Chi-square divergence between two Gaussians with the family covariance:
/// exp(deltaᵀ Σ⁻¹ delta) - 1. Symmetric, zero iff the means coincide.
pub fn chi2_gaussian(
    theta1: &DVector<f64>,
    theta2: &DVector<f64>,
    family: &GaussianFamily,
) -> Result<f64> {
    if theta1.len() != family.dim() || theta2.len() != family.dim() {
        return Err(Error::DimensionMismatch {
            op: "chi2_gaussian",
            expected: family.dim(),
            got: theta1.len().max(theta2.len()),
        });
    }
    let delta = theta2 - theta1;
    Ok(family.inv_quadratic(&delta).exp_m1())
}

/// The point of the Gaussian uncertainty set's boundary in direction `v`:
/// center + sqrt(ln(1 + radius)) L v for a unit vector v.
pub fn boundary_point(set: &UncertaintySet, direction: &DVector<f64>) -> Result<DVector<f64>> {
    let family = match &set.family {
        Family::Gaussian(f) => f,
        Family::Exponential { .. } => {
            return Err(Error::Unsupported(
                "boundary_point requires the Gaussian family".into(),
            ))
        }
    };
    if direction.len() != family.dim() {
        return Err(Error::DimensionMismatch {
            op: "boundary_point",
            expected: family.dim(),
            got: direction.len(),
        });
    }
    let norm = direction.norm();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::invalid(
            "boundary_point",
            format!("direction must be a unit vector, got norm {norm}"),
        ));
    }
    let rho = set.radius.ln_1p().sqrt();
    Ok(&set.center + family.factor() * direction * rho)
}

/// Reads a sample matrix from a headerless CSV file, one observation per
/// row. Rejects ragged rows and non-numeric fields.
pub fn read_samples(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            if lineno + 1 == text.lines().count() {
                continue;
            }
            return Err(Error::Data(format!(
                "{}: blank row at line {}",
                path.display(),
                lineno + 1
            )));
        }
        let row = line
            .split(',')
            .map(|field| {
                field.trim().parse::<f64>().map_err(|_| {
                    Error::Data(format!(
                        "{}: unparseable field {:?} at line {}",
                        path.display(),
                        field.trim(),
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Data(format!(
                    "{}: ragged row at line {}: expected {} fields, got {}",
                    path.display(),
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    let ncols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}
