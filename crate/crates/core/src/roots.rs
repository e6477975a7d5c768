//! Scalar root finding and 1-D minimization.

pub const ROOT_TOL: f64 = 1e-12;
const MAX_ITER: usize = 400;
const MAX_GROW: usize = 200;

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// Returns `None` when `f(lo)` and `f(hi)` have the same strict sign.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if !flo.is_finite() && !fhi.is_finite() {
        return None;
    }
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= tol || mid == lo || mid == hi {
            return Some(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Root of a nondecreasing `f`, growing the bracket outward from `[lo, hi]`.
pub fn solve_increasing<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Option<f64> {
    let (mut lo, mut hi) = (lo.min(hi), lo.max(hi));
    let mut step = (hi - lo).max(1.0);
    let mut n = 0;
    while f(lo) > 0.0 {
        hi = lo;
        lo -= step;
        step *= 2.0;
        n += 1;
        if n > MAX_GROW || !lo.is_finite() {
            return None;
        }
    }
    step = (hi - lo).max(1.0);
    n = 0;
    while f(hi) < 0.0 {
        lo = hi;
        hi += step;
        step *= 2.0;
        n += 1;
        if n > MAX_GROW || !hi.is_finite() {
            return None;
        }
    }
    bisect(f, lo, hi, tol)
}

/// Root of a nondecreasing `f` on `[lo, ∞)`; the lower end is fixed.
pub fn solve_increasing_from<F: Fn(f64) -> f64>(f: F, lo: f64, tol: f64) -> Option<f64> {
    if f(lo) > 0.0 {
        return None;
    }
    let mut a = lo;
    let mut step = 1.0_f64.max(lo.abs());
    let mut hi = lo + step;
    let mut n = 0;
    while f(hi) < 0.0 {
        a = hi;
        step *= 2.0;
        hi = a + step;
        n += 1;
        if n > MAX_GROW || !hi.is_finite() {
            return None;
        }
    }
    bisect(f, a, hi, tol)
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for a minimum of `f` on `[a, b]`. Returns `(x, f(x))`.
pub fn golden<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..MAX_ITER {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
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
    let (fa, fb) = (f(a), f(b));
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    if fa < best.1 {
        best = (a, fa);
    }
    if fb < best.1 {
        best = (b, fb);
    }
    best
}

/// Grid scan followed by golden refinement around the best grid cell.
pub fn grid_golden<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize, tol: f64) -> (f64, f64) {
    if b <= a {
        return (a, f(a));
    }
    let n = n.max(2);
    let h = (b - a) / n as f64;
    let mut best = (a, f(a));
    for i in 1..=n {
        let x = a + h * i as f64;
        let v = f(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    let lo = (best.0 - h).max(a);
    let hi = (best.0 + h).min(b);
    let refined = golden(&f, lo, hi, tol);
    if refined.1 <= best.1 {
        refined
    } else {
        best
    }
}
