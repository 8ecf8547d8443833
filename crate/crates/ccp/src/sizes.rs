//! Exact scenario sample-size calculus.
//!
//! The feasibility guarantee of a scenario program with `n` sampled
//! constraints in dimension `d` fails with probability at most the binomial
//! tail
//!
//! ```text
//! B(eps, d, n) = sum_{i=0}^{d-1} C(n, i) eps^i (1 - eps)^(n - i),
//! ```
//!
//! so the required sample count for confidence `1 - beta` is the smallest `n`
//! with `B(eps, d, n) <= beta`. The two-stage variant solves a small program
//! on `n1 = 20 d` samples and then validates along a line search against `n2`
//! more, with `n2` chosen so the combined procedure keeps the same guarantee.

use crate::error::{Error, Result};

/// Upper bound on any computed sample size; requests beyond it are errors.
pub const SIZE_LIMIT: u64 = 1_000_000_000;

/// A sample-size question: violation tolerance, confidence slack, decision
/// dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeRequest {
    pub epsilon: f64,
    pub beta: f64,
    pub dim: u32,
}

impl SizeRequest {
    pub fn new(epsilon: f64, beta: f64, dim: u32) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::invalid(
                "SizeRequest",
                format!("epsilon must lie in (0, 1), got {epsilon}"),
            ));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::invalid(
                "SizeRequest",
                format!("beta must lie in (0, 1), got {beta}"),
            ));
        }
        if dim == 0 {
            return Err(Error::invalid("SizeRequest", "dim must be at least 1"));
        }
        Ok(SizeRequest { epsilon, beta, dim })
    }
}

/// Stage sizes of the two-stage procedure. `n2 == 0` means the stage-1 budget
/// already meets the confidence target and stage 2 is unnecessary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FastSizes {
    pub n1: u64,
    pub n2: u64,
}

impl FastSizes {
    pub fn total(&self) -> u64 {
        self.n1 + self.n2
    }
}

/// The binomial tail B(eps, d, n), computed in log space.
///
/// Terms are exponentiated relative to their running maximum and accumulated
/// with Kahan compensation: `n` up to a few hundred thousand against `eps`
/// near 1e-5 underflows naive arithmetic. Returns exactly 1 when `n <= d - 1`.
///
/// # Panics
///
/// If `eps` is outside (0, 1) or `dim` is 0.
pub fn beta_tail(epsilon: f64, dim: u32, n: u64) -> f64 {
    assert!(
        epsilon > 0.0 && epsilon < 1.0,
        "beta_tail: epsilon must lie in (0, 1), got {epsilon}"
    );
    assert!(dim >= 1, "beta_tail: dim must be at least 1");
    if n <= u64::from(dim) - 1 {
        return 1.0;
    }
    let ln_eps = epsilon.ln();
    let ln_1m = (-epsilon).ln_1p();
    // ln C(n, i) built by the compensated recurrence ln C(n, i+1) =
    // ln C(n, i) + ln((n - i) / (i + 1)); differencing large ln-gamma values
    // instead loses enough precision to matter near the decision boundary.
    let mut ln_binom = 0.0f64;
    let mut binom_comp = 0.0f64;
    let mut log_terms = Vec::with_capacity(dim as usize);
    for i in 0..u64::from(dim) {
        let fi = i as f64;
        log_terms.push(ln_binom + fi * ln_eps + (n - i) as f64 * ln_1m);
        let step = (((n - i) as f64) / ((i + 1) as f64)).ln() - binom_comp;
        let next = ln_binom + step;
        binom_comp = (next - ln_binom) - step;
        ln_binom = next;
    }
    let peak = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return 0.0;
    }
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &lt in &log_terms {
        let y = (lt - peak).exp() - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    (peak + sum.ln()).exp().clamp(0.0, 1.0)
}

/// Smallest `n` with `beta_tail(eps, d, n) <= beta`.
///
/// Exponential bracketing followed by binary search; the tail is nonincreasing
/// in `n` beyond `n = d`, which the search relies on.
pub fn n_exact(req: &SizeRequest) -> Result<u64> {
    let d = u64::from(req.dim);
    let mut hi = d;
    while beta_tail(req.epsilon, req.dim, hi) > req.beta {
        hi = hi.saturating_mul(2);
        if hi > SIZE_LIMIT {
            return Err(Error::SizeOverflow {
                limit: SIZE_LIMIT,
                detail: format!(
                    "n_exact(eps = {}, beta = {}, d = {})",
                    req.epsilon, req.beta, req.dim
                ),
            });
        }
    }
    // Invariant: tail(lo) > beta >= tail(hi). n = d - 1 gives tail 1 > beta.
    let mut lo = d - 1;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if beta_tail(req.epsilon, req.dim, mid) <= req.beta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Stage sizes for the two-stage procedure: `n1 = 20 d` and
/// `n2 = ceil((ln beta - ln B(eps, d, n1)) / ln(1 - eps))`, clamped at zero
/// when the stage-1 tail already meets `beta`.
pub fn fast_sizes(epsilon: f64, beta: f64, dim: u32) -> Result<FastSizes> {
    let req = SizeRequest::new(epsilon, beta, dim)?;
    let n1 = 20 * u64::from(req.dim);
    let tail1 = beta_tail(req.epsilon, req.dim, n1);
    if tail1 <= req.beta {
        return Ok(FastSizes { n1, n2: 0 });
    }
    let quotient = (req.beta.ln() - tail1.ln()) / (-req.epsilon).ln_1p();
    if !quotient.is_finite() || quotient > SIZE_LIMIT as f64 {
        return Err(Error::SizeOverflow {
            limit: SIZE_LIMIT,
            detail: format!(
                "fast_sizes(eps = {}, beta = {}, d = {})",
                req.epsilon, req.beta, req.dim
            ),
        });
    }
    let n2 = quotient.ceil().max(0.0) as u64;
    Ok(FastSizes { n1, n2 })
}
