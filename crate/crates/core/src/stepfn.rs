//! Piecewise-constant functions on the real line.

use crate::error::{Error, Result};

/// A finitely piecewise-constant function on ℝ.
///
/// `values[i]` holds on `(breaks[i-1], breaks[i])`, with the outer values
/// extending to ±∞. At a breakpoint the function takes its right value.
#[derive(Clone, Debug, PartialEq)]
pub struct StepFn {
    breaks: Vec<f64>,
    values: Vec<f64>,
    // ∫₀^{breaks[i]} of the function
    cum: Vec<f64>,
}

impl StepFn {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breaks.len() + 1 {
            return Err(Error::Input(format!(
                "step function needs {} values for {} breakpoints, got {}",
                breaks.len() + 1,
                breaks.len(),
                values.len()
            )));
        }
        if breaks.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Input("step function has non-finite entries".into()));
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Input("breakpoints must be strictly increasing".into()));
        }
        let mut s = StepFn { breaks, values, cum: Vec::new() };
        s.cum = s.breaks.iter().map(|&b| s.integrate_slow(0.0, b)).collect();
        Ok(s)
    }

    pub fn constant(v: f64) -> Self {
        StepFn { breaks: Vec::new(), values: vec![v], cum: Vec::new() }
    }

    /// `lo` on `(-∞, at)` and `hi` on `[at, ∞)`.
    pub fn riemann(at: f64, lo: f64, hi: f64) -> Self {
        StepFn::new(vec![at], vec![lo, hi]).expect("finite riemann data")
    }

    /// Build from `(left edge, value)` pieces; values before the first edge use `outside_left`.
    /// Zero-length pieces are dropped and equal neighbours merged.
    pub fn from_pieces(outside_left: f64, pieces: &[(f64, f64)]) -> Result<Self> {
        let mut breaks = Vec::with_capacity(pieces.len());
        let mut values = vec![outside_left];
        for &(x, v) in pieces {
            if let Some(&last) = breaks.last() {
                if x < last {
                    return Err(Error::Input(format!("piece edge {x} precedes {last}")));
                }
                if x == last {
                    *values.last_mut().unwrap() = v;
                    continue;
                }
            }
            breaks.push(x);
            values.push(v);
        }
        StepFn::new(breaks, values).map(|s| s.simplified())
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn index(&self, x: f64) -> usize {
        self.breaks.partition_point(|&b| b <= x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.values[self.index(x)]
    }

    pub fn eval_left(&self, x: f64) -> f64 {
        self.values[self.breaks.partition_point(|&b| b < x)]
    }

    /// Merge adjacent pieces with identical values.
    pub fn simplified(&self) -> Self {
        let mut breaks = Vec::new();
        let mut values = vec![self.values[0]];
        for (i, &b) in self.breaks.iter().enumerate() {
            let v = self.values[i + 1];
            if v != *values.last().unwrap() {
                breaks.push(b);
                values.push(v);
            }
        }
        StepFn::new(breaks, values).expect("simplify keeps invariants")
    }

    /// `x ↦ -s(-x)`.
    pub fn mirrored(&self) -> Self {
        let breaks = self.breaks.iter().rev().map(|b| -b).collect();
        let values = self.values.iter().rev().map(|v| -v).collect();
        StepFn::new(breaks, values).expect("mirror keeps invariants")
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        StepFn::new(self.breaks.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    fn integrate_slow(&self, a: f64, b: f64) -> f64 {
        let (lo, hi, sign) = if a <= b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut acc = 0.0;
        for (l, r, v) in self.pieces() {
            let l = l.max(lo);
            let r = r.min(hi);
            if r > l {
                acc += v * (r - l);
            }
        }
        sign * acc
    }

    /// The primitive `∫₀ˣ`, exact.
    pub fn primitive(&self, x: f64) -> f64 {
        let k = self.index(x);
        if k == 0 {
            return match self.breaks.first() {
                None => self.values[0] * x,
                Some(&b) => self.cum[0] + self.values[0] * (x - b),
            };
        }
        self.cum[k - 1] + self.values[k] * (x - self.breaks[k - 1])
    }

    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        self.primitive(b) - self.primitive(a)
    }

    /// Pieces as `(lo, hi, value)`; the first and last are unbounded.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.values.len()).map(move |i| {
            let lo = if i == 0 { f64::NEG_INFINITY } else { self.breaks[i - 1] };
            let hi = if i == self.breaks.len() { f64::INFINITY } else { self.breaks[i] };
            (lo, hi, self.values[i])
        })
    }

    /// Pieces clipped to `[a, b]`, skipping empty ones.
    pub fn pieces_in(&self, a: f64, b: f64) -> Vec<(f64, f64, f64)> {
        self.pieces()
            .filter_map(|(l, r, v)| {
                let l = l.max(a);
                let r = r.min(b);
                (r > l).then_some((l, r, v))
            })
            .collect()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Total variation of `phi ∘ self` over the open interval `(a, b)`.
    pub fn total_variation_in(&self, a: f64, b: f64, phi: impl Fn(f64) -> f64) -> f64 {
        let vals: Vec<f64> = self.pieces_in(a, b).iter().map(|p| phi(p.2)).collect();
        vals.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0])
    }

    /// Span of the breakpoints, if there are any.
    pub fn support_hull(&self) -> Option<(f64, f64)> {
        Some((*self.breaks.first()?, *self.breaks.last()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eval_and_left_limit() {
        let s = StepFn::new(vec![0.0, 1.0], vec![2.0, -1.0, 3.0]).unwrap();
        assert_eq!(s.eval(-5.0), 2.0);
        assert_eq!(s.eval(0.0), -1.0);
        assert_eq!(s.eval_left(0.0), 2.0);
        assert_eq!(s.eval(1.0), 3.0);
        assert_eq!(s.eval_left(1.0), -1.0);
    }

    #[test]
    fn primitive_is_exact() {
        let s = StepFn::new(vec![-1.0, 2.0], vec![1.0, 3.0, -2.0]).unwrap();
        assert_eq!(s.primitive(0.0), 0.0);
        assert!((s.primitive(2.0) - 6.0).abs() < 1e-15);
        assert!((s.primitive(3.0) - 4.0).abs() < 1e-15);
        assert!((s.primitive(-2.0) - (-3.0 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(StepFn::new(vec![1.0, 0.0], vec![0.0; 3]).is_err());
        assert!(StepFn::new(vec![1.0], vec![0.0]).is_err());
        assert!(StepFn::new(vec![f64::NAN], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn from_pieces_merges() {
        let s = StepFn::from_pieces(0.0, &[(0.0, 1.0), (1.0, 1.0), (1.0, 2.0), (3.0, 0.0)]).unwrap();
        assert_eq!(s.breaks(), &[0.0, 1.0, 3.0]);
        assert_eq!(s.values(), &[0.0, 1.0, 2.0, 0.0]);
    }

    proptest! {
        #[test]
        fn primitive_matches_piece_sum(vals in prop::collection::vec(-5.0f64..5.0, 2..8), x in -10.0f64..10.0) {
            let n = vals.len() - 1;
            let breaks: Vec<f64> = (0..n).map(|i| i as f64 - n as f64 / 2.0).collect();
            let s = StepFn::new(breaks, vals).unwrap();
            let slow = s.integrate_slow(0.0, x);
            prop_assert!((s.primitive(x) - slow).abs() < 1e-12);
        }
    }
}
