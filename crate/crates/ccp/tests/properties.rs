//! Randomized invariant checks for the numeric core: solver optimality
//! against an exact oracle, quadrature against closed forms, monotonicity of
//! the tolerance and sample-size calculus, and the special-function identity
//! the radial integrals rely on.

mod common;

use nalgebra::DVector;
use proptest::prelude::*;

use ccp::divergence::{
    chi2_epsilon_prime, epsilon_prime_inverse, select_delta, DivergenceKind, ToleranceRule,
};
use ccp::generating::{
    d_data_gaussian_mixture, d_data_general, descent_rate, GeneratingDistribution, RadialNominal,
};
use ccp::models::{calibrate, Family, GaussianFamily, UncertaintySet};
use ccp::numerics::{hyp0f1, hyp1f1};
use ccp::sampler::SeededStream;
use ccp::scenario::{solve, SolveStatus};
use ccp::sizes::{beta_tail, n_exact, SizeRequest};

fn unit_ball(n: usize, alpha: f64, dim: usize) -> UncertaintySet {
    let family = Family::Gaussian(GaussianFamily::identity(dim));
    calibrate(
        &family,
        &DVector::zeros(dim),
        n,
        alpha,
        DivergenceKind::Chi2,
    )
    .unwrap()
}

proptest! {
    #[test]
    fn solver_matches_the_vertex_oracle(seed in any::<u64>()) {
        let mut stream = SeededStream::new(seed, 1);
        let program = common::random_lp(&mut stream);
        let sol = solve(&program).unwrap();
        prop_assert_eq!(sol.status, SolveStatus::Optimal);
        prop_assert!(program.max_violation(&sol.x) <= 1e-7);
        let oracle = common::vertex_min(&program);
        prop_assert!(
            (sol.objective_value - oracle).abs() <= 1e-6,
            "solver {} vs oracle {}",
            sol.objective_value,
            oracle
        );
    }

    #[test]
    fn radial_quadrature_matches_the_closed_forms(
        n in 2usize..200,
        dim in 1usize..25,
        alpha in 0.01f64..0.3,
    ) {
        let set = unit_ball(n, alpha, dim);
        let point = d_data_general(&RadialNominal::point_mass(dim).unwrap(), &set).unwrap();
        let closed = set.radius.exp_m1();
        prop_assert!(
            ((point - closed) / closed).abs() < 1e-4,
            "point mass: quadrature {point}, closed {closed}"
        );
        let scale = 1.0 / n as f64;
        let gauss =
            d_data_general(&RadialNominal::gaussian_mixture(dim, scale).unwrap(), &set).unwrap();
        let closed = d_data_gaussian_mixture(n, alpha, dim).unwrap();
        prop_assert!(
            ((gauss - closed) / closed).abs() < 1e-4,
            "gaussian mixture: quadrature {gauss}, closed {closed}"
        );
    }

    #[test]
    fn mixture_proposals_strictly_descend(
        n in 2usize..400,
        dim in 1usize..40,
        alpha in 0.01f64..0.3,
        radius_mult in 0.2f64..3.0,
        scale_mult in 0.2f64..3.0,
    ) {
        let set = unit_ball(n, alpha, dim);
        let sphere = GeneratingDistribution::sphere_mixture(
            DVector::zeros(dim),
            radius_mult * set.radius.sqrt(),
        )
        .unwrap();
        let gauss = GeneratingDistribution::gaussian_mixture(
            DVector::zeros(dim),
            scale_mult / n as f64,
        )
        .unwrap();
        prop_assert!(descent_rate(&sphere, n, alpha, dim).unwrap() < 0.0);
        prop_assert!(descent_rate(&gauss, n, alpha, dim).unwrap() < 0.0);
    }

    #[test]
    fn tightened_tolerance_round_trips(
        eps in 0.001f64..0.49,
        lambda in 0.0f64..10.0,
    ) {
        let tightened = chi2_epsilon_prime(eps, lambda).unwrap();
        prop_assert!(tightened > 0.0 && tightened <= eps);
        let back = epsilon_prime_inverse(tightened, lambda).unwrap();
        prop_assert!((back - eps).abs() < 1e-9, "round trip gave {back}");
        // The inverse is the smallest tolerance reaching the target.
        prop_assert!(chi2_epsilon_prime(back, lambda).unwrap() >= tightened - 1e-15);
    }

    #[test]
    fn tightened_tolerance_is_monotone(
        eps in 0.001f64..0.45,
        lambda in 0.0f64..10.0,
    ) {
        let base = chi2_epsilon_prime(eps, lambda).unwrap();
        prop_assert!(chi2_epsilon_prime(eps + 0.04, lambda).unwrap() >= base - 1e-15);
        prop_assert!(chi2_epsilon_prime(eps, lambda + 0.5).unwrap() <= base + 1e-15);
    }

    #[test]
    fn bound_tolerance_satisfies_its_quadratic(
        eps in 0.001f64..0.49,
        d_data in 0.0f64..40.0,
    ) {
        let delta = select_delta(eps, d_data, ToleranceRule::CauchySchwarzBound).unwrap();
        prop_assert!(delta > 0.0 && delta <= eps);
        let reassembled = delta + (delta * (1.0 - delta) * d_data).sqrt();
        prop_assert!(
            (reassembled - eps).abs() < 1e-10,
            "delta {delta} reassembles to {reassembled}"
        );
    }

    #[test]
    fn binomial_tail_is_monotone_and_the_inversion_is_minimal(
        eps in 0.005f64..0.4,
        dim in 1u32..30,
        slack in 0u64..200,
    ) {
        let n = 3 * dim as u64 + slack;
        let base = beta_tail(eps, dim, n);
        prop_assert!(beta_tail(eps, dim, n + 25) <= base + 1e-12);
        prop_assert!(beta_tail(eps, dim + 1, n) >= base - 1e-12);
        prop_assert!(beta_tail(eps + 0.05, dim, n) <= base + 1e-12);

        let required = n_exact(&SizeRequest::new(eps, 0.01, dim).unwrap()).unwrap();
        prop_assert!(beta_tail(eps, dim, required) <= 0.01);
        prop_assert!(beta_tail(eps, dim, required - 1) > 0.01);
    }

    #[test]
    fn kummer_duplication_identity_holds(
        a in 0.5f64..20.0,
        x in 0.05f64..25.0,
    ) {
        let lhs = hyp1f1(a, 2.0 * a, x).unwrap();
        let rhs = (x / 2.0).exp() * hyp0f1(a + 0.5, x * x / 16.0).unwrap();
        prop_assert!(((lhs - rhs) / rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }
}
