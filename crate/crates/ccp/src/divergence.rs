//! Chi-square tolerance translation.
//!
//! A distributionally robust chance constraint over a chi-square divergence
//! ball can be enforced by an ordinary chance constraint at a tightened
//! tolerance. Both translations here solve the same quadratic
//!
//! ```text
//! delta + sqrt(delta (1 - delta) v) = eps
//! ```
//!
//! whose root has the cancellation-free form
//!
//! ```text
//! delta = 2 eps² / (2 eps + v + sqrt(v² + 4 eps v (1 - eps))),
//! ```
//!
//! and differ only in what `v` is. The closed-form rule inverts the exact
//! worst-case probability over a ball of radius `lambda`, so `v = lambda`.
//! The Cauchy–Schwarz rule instead bounds the worst case reachable from the
//! generating distribution by a change of measure, so `v` is the worst-case
//! divergence `d_data`, which exceeds `lambda` and makes the rule more
//! conservative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The divergence family. Only the chi-square member is implemented; its
/// kernel phi(x) = (x-1)² has phi''(1) = 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    Chi2,
}

impl DivergenceKind {
    pub fn second_derivative_at_one(&self) -> f64 {
        match self {
            DivergenceKind::Chi2 => 2.0,
        }
    }
}

/// Which translation produces the Monte Carlo tolerance delta_eps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceRule {
    /// Exact worst-case inversion over the divergence ball; takes the ball
    /// radius lambda.
    Chi2ClosedForm,
    /// Quadratic solution of the Cauchy–Schwarz change-of-measure bound;
    /// takes the worst-case divergence of the generating distribution.
    CauchySchwarzBound,
}

/// Root of delta + sqrt(delta (1 - delta) v) = eps in [0, eps].
fn variance_quadratic(epsilon: f64, v: f64) -> f64 {
    if v == 0.0 {
        return epsilon;
    }
    let disc = (v * v + 4.0 * epsilon * v * (1.0 - epsilon)).sqrt();
    2.0 * epsilon * epsilon / (2.0 * epsilon + v + disc)
}

/// The tightened tolerance eps' for a ball of chi-square radius `lambda`.
///
/// Requires eps in (0, 1/2), the range on which the worst-case inversion is
/// valid. Nonincreasing in lambda, equal to eps at lambda = 0, and strictly
/// positive for every finite lambda (it decays like eps² / lambda).
pub fn chi2_epsilon_prime(epsilon: f64, lambda: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::invalid(
            "chi2_epsilon_prime",
            format!("epsilon must lie in (0, 1/2), got {epsilon}"),
        ));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid(
            "chi2_epsilon_prime",
            format!("lambda must be nonnegative, got {lambda}"),
        ));
    }
    Ok(variance_quadratic(epsilon, lambda))
}

/// Smallest eps with `chi2_epsilon_prime(eps, lambda) >= x`, by bisection to
/// absolute 1e-12. Errors when even eps just below 1/2 cannot reach `x`.
pub fn epsilon_prime_inverse(x: f64, lambda: f64) -> Result<f64> {
    if !(x >= 0.0 && x < 0.5) {
        return Err(Error::invalid(
            "epsilon_prime_inverse",
            format!("target must lie in [0, 1/2), got {x}"),
        ));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid(
            "epsilon_prime_inverse",
            format!("lambda must be nonnegative, got {lambda}"),
        ));
    }
    let hi_eps = 0.5 - 1e-12;
    if chi2_epsilon_prime(hi_eps, lambda)? < x {
        return Err(Error::Unattainable {
            op: "epsilon_prime_inverse",
            target: x,
        });
    }
    let mut lo = 0.0_f64;
    let mut hi = hi_eps;
    // eps' is nondecreasing in eps, so the predicate eps'(mid) >= x is
    // monotone; hi always satisfies it.
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        let value = if mid <= 0.0 {
            0.0
        } else {
            chi2_epsilon_prime(mid, lambda)?
        };
        if value >= x {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Tolerance from the Cauchy–Schwarz change-of-measure bound: the delta
/// solving `delta + sqrt(delta (1 - delta) d_data) = eps`.
///
/// Equals eps when `d_data` is 0 and is strictly positive throughout.
pub fn cauchy_schwarz_delta(epsilon: f64, d_data: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(
            "cauchy_schwarz_delta",
            format!("epsilon must lie in (0, 1), got {epsilon}"),
        ));
    }
    if !(d_data >= 0.0) {
        return Err(Error::invalid(
            "cauchy_schwarz_delta",
            format!("d_data must be nonnegative, got {d_data}"),
        ));
    }
    Ok(variance_quadratic(epsilon, d_data))
}

/// Dispatch on the configured rule. The second argument is the ball radius
/// for the closed form and the worst-case divergence for the bound. A zero
/// result (possible only when the quadratic degenerates past float range)
/// means no finite Monte Carlo size exists and is reported as an error.
pub fn select_delta(epsilon: f64, lambda_or_ddata: f64, rule: ToleranceRule) -> Result<f64> {
    let delta = match rule {
        ToleranceRule::Chi2ClosedForm => chi2_epsilon_prime(epsilon, lambda_or_ddata)?,
        ToleranceRule::CauchySchwarzBound => cauchy_schwarz_delta(epsilon, lambda_or_ddata)?,
    };
    if delta <= 0.0 {
        return Err(Error::ZeroTolerance { epsilon });
    }
    Ok(delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_identity_at_zero_radius() {
        assert_eq!(chi2_epsilon_prime(0.05, 0.0).unwrap(), 0.05);
        assert_eq!(chi2_epsilon_prime(0.3, 0.0).unwrap(), 0.3);
    }

    #[test]
    fn closed_form_reference_values() {
        // lambda = (0.95 chi-square quantile at 10 dof) / 80.
        let v = chi2_epsilon_prime(0.05, 0.228_837_975_665_939_33).unwrap();
        assert!((v - 0.007_831_735_686_598).abs() < 1e-12);
        // Large radii shrink the tolerance but never extinguish it.
        let v = chi2_epsilon_prime(0.05, 10.0).unwrap();
        assert!((v - 2.475_915_165_49e-4).abs() < 1e-14);
        let v = chi2_epsilon_prime(0.05, 1e6).unwrap();
        assert!(v > 0.0 && (v - 2.499_999_8e-9).abs() < 1e-15);
    }

    #[test]
    fn closed_form_monotone_in_radius() {
        let mut last = f64::INFINITY;
        for &lambda in &[0.0, 0.01, 0.1, 1.0, 10.0, 1e3, 1e6] {
            let v = chi2_epsilon_prime(0.05, lambda).unwrap();
            assert!(v <= last && v > 0.0);
            last = v;
        }
    }

    #[test]
    fn closed_form_domain() {
        assert!(chi2_epsilon_prime(0.5, 1.0).is_err());
        assert!(chi2_epsilon_prime(0.0, 1.0).is_err());
        assert!(chi2_epsilon_prime(0.05, -0.1).is_err());
    }

    #[test]
    fn inverse_round_trip() {
        let lambda = 0.2;
        let fwd = chi2_epsilon_prime(0.05, lambda).unwrap();
        let back = epsilon_prime_inverse(fwd, lambda).unwrap();
        assert!((back - 0.05).abs() < 1e-10);
    }

    #[test]
    fn inverse_residual() {
        let v = epsilon_prime_inverse(0.01, 0.1).unwrap();
        let fwd = chi2_epsilon_prime(v, 0.1).unwrap();
        assert!(fwd >= 0.01);
        assert!(fwd - 0.01 < 1e-10);
    }

    #[test]
    fn inverse_unattainable() {
        assert!(matches!(
            epsilon_prime_inverse(0.49, 10.0),
            Err(Error::Unattainable { .. })
        ));
    }

    #[test]
    fn bound_rule_reference_values() {
        // Worst-case divergences of the three generating distributions at the
        // two table settings, fed through the quadratic solution.
        let cases = [
            (37.916_083, 6.576_606_8e-5),
            (11.036_786, 2.245_357_8e-4),
            (14.739_060, 1.685_044_0e-4),
            (5.238_276, 4.685_726_0e-4),
            (3.313_913, 7.329_763_3e-4),
            (3.792_636, 6.427_470_0e-4),
        ];
        for (d_data, expect) in cases {
            let delta = cauchy_schwarz_delta(0.05, d_data).unwrap();
            assert!(
                ((delta - expect) / expect).abs() < 1e-6,
                "at D = {d_data}: {delta:e} vs {expect:e}"
            );
        }
    }

    #[test]
    fn bound_rule_solves_its_quadratic() {
        for &eps in &[0.01, 0.05, 0.1, 0.3] {
            for &d in &[0.0, 0.1, 1.0, 5.0, 40.0] {
                let delta = cauchy_schwarz_delta(eps, d).unwrap();
                assert!(delta > 0.0 && delta <= eps * (1.0 + 1e-15));
                let lhs = delta + (delta * (1.0 - delta) * d).sqrt();
                assert!(
                    (lhs - eps).abs() < 1e-12,
                    "identity failed at eps = {eps}, D = {d}: {lhs}"
                );
            }
        }
        assert_eq!(cauchy_schwarz_delta(0.05, 0.0).unwrap(), 0.05);
    }

    #[test]
    fn bound_is_more_conservative_but_gap_vanishes() {
        // With rule-appropriate arguments (radius lambda vs divergence
        // e^lambda - 1) the bound sits strictly below the closed form, and
        // the gap dies with the radius.
        let mut last = f64::INFINITY;
        for &lambda in &[1e-2, 1e-3, 1e-4] {
            let closed = chi2_epsilon_prime(0.05, lambda).unwrap();
            let bound = cauchy_schwarz_delta(0.05, lambda.exp_m1()).unwrap();
            assert!(bound < closed);
            let gap = closed - bound;
            assert!(gap < last, "gap should shrink with lambda, got {gap:e}");
            last = gap;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn select_delta_dispatch() {
        let closed = select_delta(0.05, 0.228_838, ToleranceRule::Chi2ClosedForm).unwrap();
        assert!((closed - 0.007_831_7).abs() < 1e-6);
        let bound = select_delta(0.05, 5.238_276, ToleranceRule::CauchySchwarzBound).unwrap();
        assert!((bound - 4.685_726e-4).abs() < 1e-9);
        for rule in [ToleranceRule::Chi2ClosedForm, ToleranceRule::CauchySchwarzBound] {
            assert_eq!(select_delta(0.05, 0.0, rule).unwrap(), 0.05);
        }
        // Past float range the quadratic collapses to zero and must be
        // reported, not returned.
        assert!(matches!(
            select_delta(0.05, f64::MAX, ToleranceRule::Chi2ClosedForm),
            Err(Error::ZeroTolerance { .. })
        ));
    }
}
