//! Nondecreasing piecewise-linear functions with jumps and unit-slope tails.

use crate::error::{Error, Result};
use crate::stepfn::StepFn;

/// Nondecreasing `y: ℝ → ℝ`.
///
/// Knots carry a left and right limit; between knots `y` is linear, and beyond
/// the outer knots it continues with slope 1. No knots means the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct MonoFn {
    knots: Vec<Knot>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Knot {
    pub x: f64,
    pub left: f64,
    pub right: f64,
}

/// One piece of `y` on an interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Seg {
    /// Linear from `(x0, y0)` to `(x1, y1)`; an infinite end means a unit-slope tail.
    Linear { x0: f64, x1: f64, y0: f64, y1: f64 },
    /// Jump at `x` from `left` to `right`.
    Jump { x: f64, left: f64, right: f64 },
}

impl MonoFn {
    pub fn identity() -> Self {
        MonoFn { knots: Vec::new() }
    }

    pub fn new(knots: Vec<Knot>) -> Result<Self> {
        if knots.iter().any(|k| !k.x.is_finite() || !k.left.is_finite() || !k.right.is_finite()) {
            return Err(Error::Input("monotone function has non-finite knots".into()));
        }
        if knots.windows(2).any(|w| w[1].x <= w[0].x) {
            return Err(Error::Input("knot abscissae must be strictly increasing".into()));
        }
        if knots.iter().any(|k| k.right < k.left) || knots.windows(2).any(|w| w[1].left < w[0].right) {
            return Err(Error::Input("y is not nondecreasing".into()));
        }
        Ok(MonoFn { knots })
    }

    /// Continuous interpolant through `(x, y)` points.
    pub fn from_points(points: &[(f64, f64)]) -> Result<Self> {
        Self::new(points.iter().map(|&(x, y)| Knot { x, left: y, right: y }).collect())
    }

    /// Constant pieces of a step function; the tails continue with slope 1 from the outer breakpoints.
    pub fn from_step(s: &StepFn) -> Result<Self> {
        let v = s.values();
        Self::new(s.breaks().iter().enumerate().map(|(i, &x)| Knot { x, left: v[i], right: v[i + 1] }).collect())
    }

    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    pub fn is_identity(&self) -> bool {
        self.knots.is_empty()
    }

    fn at(&self, x: f64, left: bool) -> f64 {
        let k = &self.knots;
        if k.is_empty() {
            return x;
        }
        let first = k[0];
        let last = k[k.len() - 1];
        if x < first.x || (x == first.x && left) {
            return if x == first.x { first.left } else { first.left + (x - first.x) };
        }
        if x > last.x || (x == last.x && !left) {
            return if x == last.x { last.right } else { last.right + (x - last.x) };
        }
        let i = k.partition_point(|q| q.x < x);
        if k[i].x == x {
            return if left { k[i].left } else { k[i].right };
        }
        let (a, b) = (k[i - 1], k[i]);
        a.right + (b.left - a.right) * (x - a.x) / (b.x - a.x)
    }

    /// Right value, matching the step-function convention.
    pub fn eval(&self, x: f64) -> f64 {
        self.at(x, false)
    }

    pub fn eval_left(&self, x: f64) -> f64 {
        self.at(x, true)
    }

    /// `x ↦ -y(-x)`.
    pub fn mirrored(&self) -> MonoFn {
        MonoFn { knots: self.knots.iter().rev().map(|k| Knot { x: -k.x, left: -k.right, right: -k.left }).collect() }
    }

    /// Pieces of `y` restricted to the open interval `(a, b)`, left to right.
    pub fn segments_in(&self, a: f64, b: f64) -> Vec<Seg> {
        let mut out = Vec::new();
        let mut xs: Vec<f64> = self.knots.iter().map(|k| k.x).filter(|&x| x > a && x < b).collect();
        let mut cursor = a;
        xs.push(b);
        for &x in &xs {
            if x > cursor {
                let y0 = if cursor.is_finite() { self.eval(cursor) } else { f64::NEG_INFINITY };
                let y1 = if x.is_finite() { self.eval_left(x) } else { f64::INFINITY };
                out.push(Seg::Linear { x0: cursor, x1: x, y0, y1 });
            }
            if x < b {
                let (l, r) = (self.eval_left(x), self.eval(x));
                if r > l {
                    out.push(Seg::Jump { x, left: l, right: r });
                }
            }
            cursor = x;
        }
        out
    }
}

/// Clamp segment values from above by `c`, splitting linear pieces where they cross.
pub fn clamp_segments_max(segs: &[Seg], c: f64) -> Vec<Seg> {
    let mut out = Vec::new();
    for &s in segs {
        match s {
            Seg::Linear { x0, x1, y0, y1 } => {
                if y1 <= c {
                    out.push(s);
                } else if y0 >= c {
                    out.push(Seg::Linear { x0, x1, y0: c, y1: c });
                } else {
                    let xc = if x0.is_finite() && x1.is_finite() {
                        x0 + (x1 - x0) * (c - y0) / (y1 - y0)
                    } else if x1.is_finite() {
                        x1 - (y1 - c)
                    } else {
                        x0 + (c - y0)
                    };
                    out.push(Seg::Linear { x0, x1: xc, y0, y1: c });
                    out.push(Seg::Linear { x0: xc, x1, y0: c, y1: c });
                }
            }
            Seg::Jump { x, left, right } => {
                let (l, r) = (left.min(c), right.min(c));
                if r > l {
                    out.push(Seg::Jump { x, left: l, right: r });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_tails() {
        let id = MonoFn::identity();
        assert_eq!(id.eval(3.5), 3.5);
        let y = MonoFn::new(vec![Knot { x: 0.0, left: -1.0, right: 1.0 }, Knot { x: 2.0, left: 1.0, right: 1.0 }]).unwrap();
        assert_eq!(y.eval(-2.0), -3.0);
        assert_eq!(y.eval_left(0.0), -1.0);
        assert_eq!(y.eval(0.0), 1.0);
        assert_eq!(y.eval(1.0), 1.0);
        assert_eq!(y.eval(5.0), 4.0);
    }

    #[test]
    fn rejects_decreasing() {
        assert!(MonoFn::new(vec![Knot { x: 0.0, left: 1.0, right: 0.0 }]).is_err());
        assert!(MonoFn::from_points(&[(0.0, 1.0), (1.0, 0.5)]).is_err());
    }

    #[test]
    fn from_step_keeps_flat_pieces() {
        let s = StepFn::new(vec![-1.0, 1.0], vec![-2.0, 0.0, 3.0]).unwrap();
        let y = MonoFn::from_step(&s).unwrap();
        assert_eq!(y.eval(0.3), 0.0);
        assert_eq!(y.eval(-1.5), -2.5);
        assert_eq!(y.eval(1.5), 3.5);
    }

    #[test]
    fn mirror_roundtrip() {
        let y = MonoFn::from_points(&[(-1.0, -3.0), (0.5, 0.0), (2.0, 4.0)]).unwrap();
        let m = y.mirrored();
        for x in [-3.0, -0.7, 0.1, 1.9, 4.0] {
            assert!((m.eval(x) + y.eval(-x)).abs() < 1e-12);
        }
        assert_eq!(m.mirrored(), y);
    }

    #[test]
    fn segments_and_clamp() {
        let segs = clamp_segments_max(&MonoFn::identity().segments_in(f64::NEG_INFINITY, 0.0), -0.5);
        assert_eq!(segs.len(), 2);
        match segs[1] {
            Seg::Linear { x0, x1, y0, y1 } => assert_eq!((x0, x1, y0, y1), (-0.5, 0.0, -0.5, -0.5)),
            _ => panic!(),
        }
        let y = MonoFn::new(vec![Knot { x: 1.0, left: 0.5, right: 2.0 }]).unwrap();
        let segs = y.segments_in(0.0, 3.0);
        assert_eq!(segs.len(), 3);
        assert!(matches!(segs[1], Seg::Jump { x, .. } if x == 1.0));
    }
}
