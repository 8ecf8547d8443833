//! Generating distributions for scenario draws and the worst-case data
//! divergence they induce.
//!
//! A generating distribution is the law used to draw constraint scenarios. It
//! is described here in whitened coordinates `Z = Sigma^{-1/2} (Y - theta_hat)`,
//! where every supported variant is isotropic, so its density reduces to a
//! radial profile `q(s)` with `s = ||z||`. The chi-square divergence from the
//! generating law to any member `N(theta, Sigma)` of the uncertainty set then
//! collapses to a one-dimensional integral over that radius,
//!
//! ```text
//! chi2 + 1 = e^{-a^2} Int_0^inf chi_D(s) 0F1(; D/2, s^2 a^2) / g(s) ds,
//! ```
//!
//! with `a = ||Sigma^{-1/2}(theta - theta_hat)||`, `chi_D` the chi density
//! with `D` degrees of freedom, and `g(s)` the radial profile relative to the
//! standard normal. The worst-case divergence over the calibrated set is the
//! maximum of this quantity along any ray from the center, which is what the
//! size-selection rules consume.

use nalgebra::DVector;
use std::cell::RefCell;
use std::f64::consts::LN_2;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::models::{Family, GaussianFamily, UncertaintySet};
use crate::numerics::{
    chi2_quantile, golden_max, golden_min, hyp0f1, integrate, ln_gamma_pos, QuadratureSpec,
};

mod np;

pub use np::{np_worst_power, NpNull};

/// Law used to draw scenario parameters around the fitted center.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratingDistribution {
    /// All mass at the center; scenarios are drawn from the fitted model.
    PointMass { theta: DVector<f64> },
    /// Center perturbed by a uniform draw on the sphere of the given radius
    /// in whitened coordinates.
    SphereMixture { theta: DVector<f64>, radius: f64 },
    /// Center perturbed by a Gaussian with covariance `scale * Sigma`.
    GaussianMixture { theta: DVector<f64>, scale: f64 },
    /// Draws from `proposal` with probability `weight`, otherwise from `base`.
    Blend {
        weight: f64,
        base: Box<GeneratingDistribution>,
        proposal: Box<GeneratingDistribution>,
    },
}

impl GeneratingDistribution {
    pub fn point_mass(theta: DVector<f64>) -> Self {
        GeneratingDistribution::PointMass { theta }
    }

    pub fn sphere_mixture(theta: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::invalid(
                "sphere_mixture",
                format!("radius must be finite and nonnegative, got {radius}"),
            ));
        }
        Ok(GeneratingDistribution::SphereMixture { theta, radius })
    }

    pub fn gaussian_mixture(theta: DVector<f64>, scale: f64) -> Result<Self> {
        if !(scale >= 0.0) || !scale.is_finite() {
            return Err(Error::invalid(
                "gaussian_mixture",
                format!("scale must be finite and nonnegative, got {scale}"),
            ));
        }
        Ok(GeneratingDistribution::GaussianMixture { theta, scale })
    }

    /// Bernoulli mixture of a point mass `base` and a mixture `proposal`
    /// sharing the same center.
    pub fn blend(
        weight: f64,
        base: GeneratingDistribution,
        proposal: GeneratingDistribution,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::invalid(
                "blend",
                format!("weight must lie in [0, 1], got {weight}"),
            ));
        }
        if !matches!(base, GeneratingDistribution::PointMass { .. }) {
            return Err(Error::invalid("blend", "base must be a point mass"));
        }
        if !matches!(
            proposal,
            GeneratingDistribution::SphereMixture { .. }
                | GeneratingDistribution::GaussianMixture { .. }
        ) {
            return Err(Error::invalid(
                "blend",
                "proposal must be a sphere or Gaussian mixture",
            ));
        }
        if base.theta() != proposal.theta() {
            return Err(Error::invalid(
                "blend",
                "base and proposal must share the same center",
            ));
        }
        Ok(GeneratingDistribution::Blend {
            weight,
            base: Box::new(base),
            proposal: Box::new(proposal),
        })
    }

    /// Center of the distribution.
    pub fn theta(&self) -> &DVector<f64> {
        match self {
            GeneratingDistribution::PointMass { theta }
            | GeneratingDistribution::SphereMixture { theta, .. }
            | GeneratingDistribution::GaussianMixture { theta, .. } => theta,
            GeneratingDistribution::Blend { base, .. } => base.theta(),
        }
    }

    pub fn dim(&self) -> usize {
        self.theta().len()
    }
}

/// Radial density profile of a generating distribution in whitened
/// coordinates.
///
/// Stores the profile relative to the standard normal, `g(s)`, so that the
/// full density of `Z` at radius `s` is `(2 pi)^{-D/2} e^{-s^2/2} g(s)`. The
/// constructors verify that the profile integrates to one over `R^D` within
/// `1e-8` and stays positive.
#[derive(Clone)]
pub struct RadialNominal {
    dim: usize,
    relative: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for RadialNominal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialNominal").field("dim", &self.dim).finish()
    }
}

impl RadialNominal {
    /// Wraps an arbitrary radial density `q(s)` of `Z`.
    pub fn new(dim: usize, profile: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        check_dim("RadialNominal::new", dim)?;
        let half = dim as f64 / 2.0;
        let ln_std = -half * (2.0 * std::f64::consts::PI).ln();
        let relative = Arc::new(move |s: f64| {
            let q = profile(s);
            if q == 0.0 {
                return 0.0;
            }
            // Relative profile q(s) / N(0, I) radial density, assembled in
            // log space so moderate tails survive the division.
            (q.ln() - ln_std + 0.5 * s * s).exp()
        });
        Self::verified(dim, relative)
    }

    /// Standard normal in whitened coordinates.
    pub fn point_mass(dim: usize) -> Result<Self> {
        check_dim("RadialNominal::point_mass", dim)?;
        Self::verified(dim, Arc::new(|_s: f64| 1.0))
    }

    /// Normal with covariance `(1 + scale) I` in whitened coordinates.
    pub fn gaussian_mixture(dim: usize, scale: f64) -> Result<Self> {
        check_dim("RadialNominal::gaussian_mixture", dim)?;
        if !(scale >= 0.0) || !scale.is_finite() {
            return Err(Error::invalid(
                "RadialNominal::gaussian_mixture",
                format!("scale must be finite and nonnegative, got {scale}"),
            ));
        }
        let half = dim as f64 / 2.0;
        let relative = Arc::new(move |s: f64| {
            let ln_g = -half * (1.0 + scale).ln() + 0.5 * s * s * scale / (1.0 + scale);
            ln_g.exp()
        });
        Self::verified(dim, relative)
    }

    /// Standard normal convolved with a uniform draw on the sphere of the
    /// given radius.
    pub fn sphere_mixture(dim: usize, radius: f64) -> Result<Self> {
        check_dim("RadialNominal::sphere_mixture", dim)?;
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::invalid(
                "RadialNominal::sphere_mixture",
                format!("radius must be finite and nonnegative, got {radius}"),
            ));
        }
        let half = dim as f64 / 2.0;
        let relative = Arc::new(move |s: f64| {
            // Spherical average of exp(radius * z . u) over unit directions u
            // is 0F1(; D/2, s^2 radius^2 / 4).
            let f = hyp0f1(half, 0.25 * s * s * radius * radius).unwrap_or(f64::NAN);
            (-0.5 * radius * radius).exp() * f
        });
        Self::verified(dim, relative)
    }

    /// Convex combination of two profiles on the same dimension.
    pub fn blend(weight: f64, base: &RadialNominal, proposal: &RadialNominal) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::invalid(
                "RadialNominal::blend",
                format!("weight must lie in [0, 1], got {weight}"),
            ));
        }
        if base.dim != proposal.dim {
            return Err(Error::DimensionMismatch {
                op: "RadialNominal::blend",
                expected: base.dim,
                got: proposal.dim,
            });
        }
        let b = Arc::clone(&base.relative);
        let p = Arc::clone(&proposal.relative);
        let relative =
            Arc::new(move |s: f64| (1.0 - weight) * b(s) + weight * p(s));
        Self::verified(base.dim, relative)
    }

    /// Profile of a generating distribution.
    pub fn for_generating(gen: &GeneratingDistribution) -> Result<Self> {
        match gen {
            GeneratingDistribution::PointMass { theta } => Self::point_mass(theta.len()),
            GeneratingDistribution::SphereMixture { theta, radius } => {
                Self::sphere_mixture(theta.len(), *radius)
            }
            GeneratingDistribution::GaussianMixture { theta, scale } => {
                Self::gaussian_mixture(theta.len(), *scale)
            }
            GeneratingDistribution::Blend {
                weight,
                base,
                proposal,
            } => Self::blend(
                *weight,
                &Self::for_generating(base)?,
                &Self::for_generating(proposal)?,
            ),
        }
    }

    fn verified(dim: usize, relative: Arc<dyn Fn(f64) -> f64 + Send + Sync>) -> Result<Self> {
        let nominal = RadialNominal { dim, relative };
        let mass = nominal.total_mass()?;
        if !( (mass - 1.0).abs() <= 1e-8 ) {
            return Err(Error::invalid(
                "RadialNominal",
                format!("profile integrates to {mass:.12}, expected 1 within 1e-8"),
            ));
        }
        Ok(nominal)
    }

    /// Integral of the density over all of `R^D`; one for a proper profile.
    fn total_mass(&self) -> Result<f64> {
        let dim = self.dim;
        let g = Arc::clone(&self.relative);
        let ln_norm = ln_chi_normalizer(dim);
        let d = dim as f64;
        let spec = QuadratureSpec::to_infinity(0.0, 1e-10)?;
        integrate(
            move |s| {
                let gs = g(s);
                if !(gs > 0.0) || !gs.is_finite() {
                    return f64::NAN;
                }
                let ln_shell = if dim == 1 {
                    ln_norm - 0.5 * s * s
                } else {
                    ln_norm + (d - 1.0) * s.ln() - 0.5 * s * s
                };
                (ln_shell + gs.ln()).exp()
            },
            &spec,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Density of `Z` at radius `s`.
    pub fn density(&self, s: f64) -> f64 {
        let half = self.dim as f64 / 2.0;
        let ln_std = -half * (2.0 * std::f64::consts::PI).ln() - 0.5 * s * s;
        let g = (self.relative)(s);
        if g == 0.0 {
            return 0.0;
        }
        (ln_std + g.ln()).exp()
    }

}

/// Log of the chi-density normalizer `2^{1 - D/2} / Gamma(D/2)`.
fn ln_chi_normalizer(dim: usize) -> f64 {
    let half = dim as f64 / 2.0;
    (1.0 - half) * LN_2 - ln_gamma_pos(half)
}

fn check_dim(op: &'static str, dim: usize) -> Result<usize> {
    if dim == 0 || dim > u32::MAX as usize {
        return Err(Error::invalid(
            op,
            format!("dimension must lie in 1..=u32::MAX, got {dim}"),
        ));
    }
    Ok(dim)
}

fn set_radius(n: usize, alpha: f64, dim: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("set_radius", "sample count must be positive"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(
            "set_radius",
            format!("alpha must lie in (0, 1), got {alpha}"),
        ));
    }
    let dim = check_dim("set_radius", dim)?;
    Ok(chi2_quantile(1.0 - alpha, dim as u32)? / n as f64)
}

/// Worst-case divergence when scenarios are drawn from the fitted model
/// itself.
pub fn d_data_pointmass(n: usize, alpha: f64, dim: usize) -> Result<f64> {
    Ok(set_radius(n, alpha, dim)?.exp_m1())
}

/// Worst-case divergence for the Gaussian mixture with its default scale
/// `1/n`.
pub fn d_data_gaussian_mixture(n: usize, alpha: f64, dim: usize) -> Result<f64> {
    let lambda = set_radius(n, alpha, dim)?;
    let nf = n as f64;
    let half = dim as f64 / 2.0;
    let prefactor = ((nf + 1.0) * (nf + 1.0) / (nf * (nf + 2.0))).powf(half);
    Ok(prefactor * (lambda * nf / (nf + 2.0)).exp() - 1.0)
}

/// Worst-case divergence for the sphere mixture with its default radius
/// `sqrt(chi2_quantile(1 - alpha, dim) / n)`.
pub fn d_data_sphere_mixture(n: usize, alpha: f64, dim: usize) -> Result<f64> {
    let lambda = set_radius(n, alpha, dim)?;
    let nominal = RadialNominal::sphere_mixture(dim, lambda.sqrt())?;
    max_divergence_over_ray(&nominal, lambda)
}

/// Chi-square divergence from the nominal profile to `N(theta, Sigma)`,
/// with `theta` measured relative to the fitted center the profile is built
/// around.
///
/// Reduces to a radial integral: the answer depends on `theta` only through
/// the whitened displacement `a = ||Sigma^{-1/2} theta||`, so the result is
/// constant on ellipsoidal shells around the center. Reports a quadrature
/// failure when the profile's tail is too light for the integral to
/// converge.
pub fn chi2_nominal_to_theta(
    nominal: &RadialNominal,
    theta: &DVector<f64>,
    family: &GaussianFamily,
) -> Result<f64> {
    if theta.len() != family.dim() {
        return Err(Error::DimensionMismatch {
            op: "chi2_nominal_to_theta",
            expected: family.dim(),
            got: theta.len(),
        });
    }
    if nominal.dim() != family.dim() {
        return Err(Error::DimensionMismatch {
            op: "chi2_nominal_to_theta",
            expected: family.dim(),
            got: nominal.dim(),
        });
    }
    let a = family.inv_quadratic(theta).sqrt();
    radial_divergence(nominal, a)
}

/// Core radial integral: divergence from the profile to a normal displaced by
/// `a` in whitened coordinates.
fn radial_divergence(nominal: &RadialNominal, a: f64) -> Result<f64> {
    let dim = nominal.dim();
    let d = dim as f64;
    let half = d / 2.0;
    let ln_norm = ln_chi_normalizer(dim);
    let g = Arc::clone(&nominal.relative);
    let spec = QuadratureSpec::to_infinity(0.0, 1e-9)?;
    let integral = integrate(
        move |s| {
            let gs = g(s);
            if gs.is_infinite() {
                return 0.0;
            }
            if !(gs > 0.0) {
                // A vanishing profile under positive target mass means the
                // divergence integral blows up; let the quadrature report it.
                return f64::INFINITY;
            }
            let ln_shell = if dim == 1 {
                ln_norm - 0.5 * s * s
            } else {
                ln_norm + (d - 1.0) * s.ln() - 0.5 * s * s
            };
            let f = match hyp0f1(half, s * s * a * a) {
                Ok(v) => v,
                Err(_) => return f64::NAN,
            };
            (ln_shell + f.ln() - gs.ln()).exp()
        },
        &spec,
    )?;
    Ok(((-a * a).exp() * integral - 1.0).max(0.0))
}

/// Maximum of the radial divergence over displacements `a` in
/// `[0, sqrt(radius)]`.
fn max_divergence_over_ray(nominal: &RadialNominal, radius: f64) -> Result<f64> {
    let rho = radius.sqrt();
    let failure = RefCell::new(None);
    let (_, value) = golden_max(
        |t| match radial_divergence(nominal, t * rho) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        0.0,
        1.0,
        1e-8,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(value)
}

/// Worst-case divergence from an arbitrary radial nominal over the
/// uncertainty set.
///
/// The set is taken in its asymptotic form, whose Gaussian boundary lies at
/// whitened distance `sqrt(radius)` from the center; the divergence is
/// radially monotone for every supported profile, so the maximum over the set
/// equals the maximum along a single ray to that boundary.
pub fn d_data_general(nominal: &RadialNominal, set: &UncertaintySet) -> Result<f64> {
    let family = match &set.family {
        Family::Gaussian(f) => f,
        Family::Exponential { .. } => {
            return Err(Error::Unsupported(
                "d_data_general requires a Gaussian family".into(),
            ))
        }
    };
    if nominal.dim() != family.dim() {
        return Err(Error::DimensionMismatch {
            op: "d_data_general",
            expected: family.dim(),
            got: nominal.dim(),
        });
    }
    max_divergence_over_ray(nominal, set.radius)
}

/// First-order change of the worst-case divergence when blending mass `t`
/// of the proposal into the point mass, per unit `t` at `t = 0`.
///
/// Negative values certify that a small blend strictly reduces the
/// worst-case divergence below the point-mass value.
pub fn descent_rate(
    proposal: &GeneratingDistribution,
    n: usize,
    alpha: f64,
    dim: usize,
) -> Result<f64> {
    if proposal.dim() != dim {
        return Err(Error::DimensionMismatch {
            op: "descent_rate",
            expected: dim,
            got: proposal.dim(),
        });
    }
    let lambda = set_radius(n, alpha, dim)?;
    descent_rate_at_radius(proposal, lambda, dim)
}

fn descent_rate_at_radius(
    proposal: &GeneratingDistribution,
    lambda: f64,
    dim: usize,
) -> Result<f64> {
    // rho is the whitened distance to the divergence-ball boundary, where
    // the binding worst case sits.
    let rho = lambda.ln_1p().sqrt();
    let half = dim as f64 / 2.0;
    let expectation = match proposal {
        GeneratingDistribution::PointMass { .. } => 1.0,
        GeneratingDistribution::SphereMixture { radius, .. } => {
            // Spherical average of exp(2 rho radius u1) over unit directions.
            hyp0f1(half, rho * rho * radius * radius)?
        }
        GeneratingDistribution::GaussianMixture { scale, .. } => (2.0 * scale * rho * rho).exp(),
        GeneratingDistribution::Blend {
            weight, proposal, ..
        } => {
            return Ok(weight * descent_rate_at_radius(proposal, lambda, dim)?);
        }
    };
    Ok((1.0 + lambda) * (1.0 - expectation))
}

/// Searches the blend weight `t` minimizing the worst-case divergence of
/// `(1 - t) base + t proposal` over the set.
///
/// Refuses proposals that do not strictly descend at `t = 0`. Evaluates a
/// uniform grid of `grid_size` weights on `[0, 1]` and refines an interior
/// minimum by golden section; returns the minimizing weight and its
/// divergence.
pub fn blend_search(
    base: &GeneratingDistribution,
    proposal: &GeneratingDistribution,
    set: &UncertaintySet,
    grid_size: usize,
) -> Result<(f64, f64)> {
    if grid_size < 2 {
        return Err(Error::invalid(
            "blend_search",
            format!("grid must have at least two points, got {grid_size}"),
        ));
    }
    if !matches!(base, GeneratingDistribution::PointMass { .. }) {
        return Err(Error::invalid("blend_search", "base must be a point mass"));
    }
    let dim = base.dim();
    let rate = descent_rate_at_radius(proposal, set.radius, dim)?;
    if !(rate < 0.0) {
        return Err(Error::invalid(
            "blend_search",
            format!("proposal has descent rate {rate:.6}, expected strictly negative"),
        ));
    }
    let base_nominal = RadialNominal::for_generating(base)?;
    let proposal_nominal = RadialNominal::for_generating(proposal)?;
    let value_at = |t: f64| -> Result<f64> {
        let blended = RadialNominal::blend(t, &base_nominal, &proposal_nominal)?;
        max_divergence_over_ray(&blended, set.radius)
    };

    let mut best = (0.0, f64::INFINITY);
    let mut values = Vec::with_capacity(grid_size);
    for i in 0..grid_size {
        let t = i as f64 / (grid_size - 1) as f64;
        let v = value_at(t)?;
        values.push(v);
        if v < best.1 {
            best = (t, v);
        }
    }
    let argmin = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if argmin > 0 && argmin + 1 < grid_size {
        let step = 1.0 / (grid_size - 1) as f64;
        let lo = (argmin - 1) as f64 * step;
        let hi = (argmin + 1) as f64 * step;
        let failure = RefCell::new(None);
        let (t, v) = golden_min(
            |t| match value_at(t) {
                Ok(v) => v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::INFINITY
                }
            },
            lo,
            hi,
            1e-6,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        if v < best.1 {
            best = (t, v);
        }
    }
    Ok(best)
}
