//! Worst-case Neyman-Pearson power against a grid of Gaussian alternatives.
//!
//! For a candidate generating law `P0` and the alternative family
//! `{N(theta, 1) : |theta| <= theta_abs_max}`, the quantity computed here is
//! the largest power any size-`delta` likelihood-ratio test achieves against
//! a single alternative. Small values mean `P0` is hard to tell apart from
//! every alternative at once, which is the property a good generating
//! distribution needs.

use std::cell::RefCell;
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::numerics::{bisect_root, golden_max, std_normal_cdf, std_normal_quantile};

/// Null laws with tractable likelihood-ratio regions against `N(theta, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpNull {
    /// Standard normal; the rejection region is a right half-line.
    StdNormal,
    /// Centered normal with variance two; the region is an interval centered
    /// at `2 theta`.
    Normal0Var2,
    /// Half-half mixture of `N(-1, 1)` and `N(1, 1)`; the region is a level
    /// set of the concave log likelihood ratio.
    SymmetricTwoPointMixture,
}

/// Maximum Neyman-Pearson power of a size-`delta` test of `p0` against the
/// alternatives `N(theta, 1)` for `theta` in `[-theta_abs_max, theta_abs_max]`.
///
/// Scans a symmetric 401-point grid of alternatives and refines an interior
/// maximum by golden section.
pub fn np_worst_power(p0: NpNull, theta_abs_max: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::invalid(
            "np_worst_power",
            format!("delta must lie in (0, 0.5), got {delta}"),
        ));
    }
    if !(theta_abs_max > 0.0) || !theta_abs_max.is_finite() {
        return Err(Error::invalid(
            "np_worst_power",
            format!("theta_abs_max must be positive and finite, got {theta_abs_max}"),
        ));
    }
    const GRID: usize = 401;
    let step = 2.0 * theta_abs_max / (GRID - 1) as f64;
    let mut best = f64::NEG_INFINITY;
    let mut argmax = 0usize;
    for i in 0..GRID {
        let theta = -theta_abs_max + i as f64 * step;
        let power = np_power(p0, theta, delta)?;
        if power > best {
            best = power;
            argmax = i;
        }
    }
    if argmax > 0 && argmax + 1 < GRID {
        let lo = -theta_abs_max + (argmax - 1) as f64 * step;
        let hi = -theta_abs_max + (argmax + 1) as f64 * step;
        let failure = RefCell::new(None);
        let (_, refined) = golden_max(
            |theta| match np_power(p0, theta, delta) {
                Ok(v) => v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NEG_INFINITY
                }
            },
            lo,
            hi,
            1e-10,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        best = best.max(refined);
    }
    Ok(best)
}

/// Power of the size-`delta` likelihood-ratio test of `p0` against
/// `N(theta, 1)`.
fn np_power(p0: NpNull, theta: f64, delta: f64) -> Result<f64> {
    match p0 {
        NpNull::StdNormal => {
            // Monotone likelihood ratio: reject on the tail pointing toward
            // the alternative.
            let c = std_normal_quantile(1.0 - delta)?;
            Ok(1.0 - std_normal_cdf(c - theta.abs()))
        }
        NpNull::Normal0Var2 => {
            let two_theta = 2.0 * theta;
            let mass = |c: f64| {
                std_normal_cdf((two_theta + c) / SQRT_2)
                    - std_normal_cdf((two_theta - c) / SQRT_2)
            };
            let hi = 2.0 * two_theta.abs() + 30.0;
            let c = bisect_root(|c| mass(c) - delta, 0.0, hi, 1e-12)?;
            Ok(std_normal_cdf(theta + c) - std_normal_cdf(theta - c))
        }
        NpNull::SymmetricTwoPointMixture => two_point_power(theta, delta),
    }
}

/// Log likelihood ratio of `N(theta, 1)` against the two-point mixture, up
/// to an additive constant: `h(y) = theta y - ln cosh y`.
fn two_point_log_ratio(theta: f64, y: f64) -> f64 {
    theta * y - ln_cosh(y)
}

fn ln_cosh(y: f64) -> f64 {
    let a = y.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Mixture mass of the interval `(a, b)` under `0.5 N(-1,1) + 0.5 N(1,1)`.
fn mixture_mass(a: f64, b: f64) -> f64 {
    0.5 * (std_normal_cdf(b + 1.0) - std_normal_cdf(a + 1.0))
        + 0.5 * (std_normal_cdf(b - 1.0) - std_normal_cdf(a - 1.0))
}

fn two_point_power(theta: f64, delta: f64) -> Result<f64> {
    let t = theta.abs();
    if t >= 1.0 - 1e-9 {
        // The log ratio is monotone, so the region is a half-line {y > c}.
        let tail = |c: f64| {
            0.5 * (1.0 - std_normal_cdf(c + 1.0)) + 0.5 * (1.0 - std_normal_cdf(c - 1.0))
        };
        let c = bisect_root(|c| tail(c) - delta, -40.0, 40.0, 1e-12)?;
        return Ok(1.0 - std_normal_cdf(c - t));
    }

    // Interior theta: h is strictly concave with peak at artanh(theta), so
    // each level below the peak cuts an interval. Bisect on the level until
    // the interval carries null mass delta.
    let ystar = t.atanh();
    let hstar = two_point_log_ratio(t, ystar);
    let endpoints = |level: f64| -> Result<(f64, f64)> {
        let drop = hstar - level;
        // The log ratio falls off with asymptotic slope 1 -+ theta on the
        // two sides, which bounds how far the roots can sit from the peak.
        let lo = ystar - 3.0 * drop / (1.0 + t) - 5.0;
        let hi = ystar + 3.0 * drop / (1.0 - t) + 5.0;
        let left = bisect_root(|y| two_point_log_ratio(t, y) - level, lo, ystar, 1e-12)?;
        let right = bisect_root(|y| two_point_log_ratio(t, y) - level, ystar, hi, 1e-12)?;
        Ok((left, right))
    };
    let failure = RefCell::new(None);
    let level = bisect_root(
        |level| match endpoints(level) {
            Ok((a, b)) => mixture_mass(a, b) - delta,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        },
        hstar - 60.0,
        hstar - 1e-13,
        1e-13,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let (a, b) = endpoints(level)?;
    Ok(std_normal_cdf(b - t) - std_normal_cdf(a - t))
}
