//! Composite Simpson quadrature.

/// Composite Simpson on `[a, b]` with `n` subintervals (rounded up to even).
///
/// Nodes are pulled a hair inside the interval so step functions are read from the inside.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let n = (n.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let eps = 1e-12 * (b - a);
    let mut s = f(a + eps) + f(b - eps);
    for j in 1..n {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + j as f64 * h);
    }
    s * h / 3.0
}

/// Simpson on each piece of `[a, b]` cut at the given breakpoints.
pub fn simpson_pieces(f: impl Fn(f64) -> f64, breaks: &[f64], a: f64, b: f64, n: usize) -> f64 {
    cut(breaks, a, b).windows(2).map(|w| simpson(&f, w[0], w[1], n)).sum()
}

/// `a`, the breakpoints strictly inside `(a, b)` in order, then `b`.
pub fn cut(breaks: &[f64], a: f64, b: f64) -> Vec<f64> {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(|x, y| x.total_cmp(y));
    pts.dedup();
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_is_exact() {
        let v = simpson(|x| x * x * x - 2.0 * x, -1.0, 2.0, 4);
        assert!((v - (15.0 / 4.0 - 3.0)).abs() < 1e-10);
    }

    #[test]
    fn pieces_handle_jumps() {
        let f = |x: f64| if x < 0.3 { 1.0 } else { 5.0 };
        let v = simpson_pieces(f, &[0.3, 7.0], 0.0, 1.0, 8);
        assert!((v - (0.3 + 5.0 * 0.7)).abs() < 1e-10);
    }
}
