//! Golden-section search and bracketed bisection.

use crate::error::{Error, Result};

const INVPHI: f64 = 0.618_033_988_749_894_9;
const INVPHI2: f64 = 0.381_966_011_250_105_1;

/// Maximize a unimodal function on [lo, hi] by golden-section search.
///
/// Returns (argmax, max). Endpoints are evaluated too, so boundary maxima are
/// returned exactly rather than to within the interior tolerance.
pub fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, xtol: f64) -> (f64, f64) {
    assert!(lo <= hi, "golden_max needs an ordered interval");
    let mut a = lo;
    let mut b = hi;
    let mut h = b - a;
    if h <= xtol {
        let (fa, fb) = (f(a), f(b));
        return if fa >= fb { (a, fa) } else { (b, fb) };
    }
    let mut c = a + INVPHI2 * h;
    let mut d = a + INVPHI * h;
    let mut fc = f(c);
    let mut fd = f(d);
    while h > xtol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            h = b - a;
            c = a + INVPHI2 * h;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            h = b - a;
            d = a + INVPHI * h;
            fd = f(d);
        }
    }
    let (mut best_x, mut best_f) = if fc >= fd { (c, fc) } else { (d, fd) };
    for (x, fx) in [(lo, f(lo)), (hi, f(hi))] {
        if fx > best_f {
            best_x = x;
            best_f = fx;
        }
    }
    (best_x, best_f)
}

/// Minimize a unimodal function on [lo, hi]; see [`golden_max`].
pub fn golden_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, xtol: f64) -> (f64, f64) {
    let (x, neg) = golden_max(|t| -f(t), lo, hi, xtol);
    (x, -neg)
}

/// Find a root of `f` on [lo, hi] by bisection, requiring a sign change.
pub fn bisect_root(f: impl Fn(f64) -> f64, lo: f64, hi: f64, xtol: f64) -> Result<f64> {
    let mut a = lo;
    let mut b = hi;
    let fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoConvergence {
            op: "bisect_root",
            detail: format!("no sign change on [{lo}, {hi}]: f = ({fa:e}, {fb:e})"),
        });
    }
    let falling = fa > 0.0;
    while b - a > xtol {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == falling {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}
