//! Helpers shared by the integration-test targets.

use ccp::sampler::SeededStream;
use ccp::scenario::{Constraint, Objective, ScenarioProgram};
use nalgebra::{DMatrix, DVector};

/// Random bounded LP in at most four variables: a handful of random linear
/// rows, a simplex cap so the feasible set is bounded, and nonnegativity.
/// Small enough that exact vertex enumeration stays cheap.
pub fn random_lp(stream: &mut SeededStream) -> ScenarioProgram {
    let d = 1 + (stream.next_uniform() * 4.0) as usize;
    let m = 1 + (stream.next_uniform() * 10.0) as usize;
    let mut constraints = Vec::with_capacity(m + 1);
    for _ in 0..m {
        let g = DVector::from_fn(d, |_, _| stream.next_normal());
        let h = 0.1 + 2.0 * stream.next_uniform();
        constraints.push(Constraint::LinearRow { g, h });
    }
    constraints.push(Constraint::LinearRow {
        g: DVector::from_element(d, 1.0),
        h: 10.0,
    });
    let c = DVector::from_fn(d, |_, _| stream.next_normal());
    ScenarioProgram {
        objective: Objective::Linear { c },
        constraints,
        nonneg: vec![true; d],
    }
}

/// Exact minimum of a bounded LP by enumerating basic feasible points.
pub fn vertex_min(program: &ScenarioProgram) -> f64 {
    let d = program.dim();
    let c = match &program.objective {
        Objective::Linear { c } => c.clone(),
        Objective::Quadratic { .. } => unreachable!("oracle only handles linear objectives"),
    };
    let mut planes: Vec<(DVector<f64>, f64)> = Vec::new();
    for con in &program.constraints {
        match con {
            Constraint::LinearRow { g, h } => planes.push((g.clone(), *h)),
            Constraint::QuadraticForm { .. } => unreachable!("oracle only handles linear rows"),
        }
    }
    for j in 0..d {
        let mut e = DVector::zeros(d);
        e[j] = 1.0;
        planes.push((e, 0.0));
    }
    let k = planes.len();
    let mut idx: Vec<usize> = (0..d).collect();
    let mut best = f64::INFINITY;
    loop {
        let mut mat = DMatrix::zeros(d, d);
        let mut rhs = DVector::zeros(d);
        for (r, &i) in idx.iter().enumerate() {
            mat.row_mut(r).copy_from(&planes[i].0.transpose());
            rhs[r] = planes[i].1;
        }
        if let Some(v) = mat.clone().lu().solve(&rhs) {
            if (&mat * &v - &rhs).amax() <= 1e-8 && program.max_violation(&v) <= 1e-9 {
                best = best.min(c.dot(&v));
            }
        }
        if !next_combination(&mut idx, k) {
            break;
        }
    }
    best
}

fn next_combination(idx: &mut [usize], k: usize) -> bool {
    let d = idx.len();
    let mut i = d;
    while i > 0 {
        i -= 1;
        if idx[i] < k - (d - i) {
            idx[i] += 1;
            for j in i + 1..d {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
