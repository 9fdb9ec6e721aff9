//! Scalar root bracketing helpers.

/// Bisection on a sign-changing bracket, run until the interval cannot shrink further
/// or its width is at most `xtol`. Returns the endpoint with the smaller residual.
pub(crate) fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64) -> f64 {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo == 0.0 {
        return lo;
    }
    if fhi == 0.0 {
        return hi;
    }
    debug_assert!(flo.signum() != fhi.signum(), "bisect needs a sign change");
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= xtol {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    if flo.abs() <= fhi.abs() {
        lo
    } else {
        hi
    }
}

/// Safeguarded Newton iteration for an increasing function on `[lo, hi]` with
/// `f(lo) <= 0 <= f(hi)`. Falls back to bisection whenever Newton leaves the bracket.
pub(crate) fn newton_bracketed<F: FnMut(f64) -> (f64, f64)>(mut f: F, mut lo: f64, mut hi: f64, rtol: f64) -> f64 {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        let next = if dfx > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        let step = (next - x).abs();
        x = next;
        if step <= rtol * x.abs() || hi - lo <= rtol * x.abs() {
            break;
        }
    }
    x
}

/// Golden-section search for the minimiser of `f` on `[a, b]`.
pub(crate) fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..300 {
        if (b - a).abs() <= xtol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 0.0);
        assert!((r - 2f64.sqrt()).abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn newton_cube_root() {
        let r = newton_bracketed(|x| (x * x * x - 10.0, 3.0 * x * x), 0.0, 10.0, 1e-15);
        assert!((r - 10f64.cbrt()).abs() < 1e-13);
    }

    #[test]
    fn golden_parabola() {
        let (x, fx) = golden_min(|x| (x - 1.3).powi(2) + 0.5, 0.0, 4.0, 1e-10);
        assert!((x - 1.3).abs() < 1e-8);
        assert!((fx - 0.5).abs() < 1e-14);
    }
}
