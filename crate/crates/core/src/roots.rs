//! Bracketing root search shared by the varactor inverse and the bias solver.

/// Bisection on `[lo, hi]`. `f(lo)` and `f(hi)` must not share a sign.
///
/// Stops when the bracket is narrower than `x_tol` or an exact zero is hit.
/// Returns `None` when the endpoints do not bracket a root.
pub fn bisect<F>(mut lo: f64, mut hi: f64, x_tol: f64, max_iter: usize, f: F) -> Option<f64>
where
    F: Fn(f64) -> f64,
{
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Some(lo);
    }
    if f_hi == 0.0 {
        return Some(hi);
    }
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo.signum() == f_hi.signum() {
        return None;
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= x_tol || mid == lo || mid == hi {
            return Some(mid);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Some(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}
