//! Strictly convex fluxes and the interface maps built from a pair of them.

use crate::error::{Error, Result};
use crate::roots;

/// Branch of a convex flux on either side of its minimum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

// f(u) = f0 + d0 (u - u0) + k/2 (u - u0)^2 on one piece of a tabulated flux
#[derive(Clone, Copy, Debug)]
pub struct Piece {
    u0: f64,
    f0: f64,
    d0: f64,
    k: f64,
}

impl Piece {
    fn eval(&self, u: f64) -> f64 {
        let s = u - self.u0;
        self.f0 + s * (self.d0 + 0.5 * self.k * s)
    }

    fn deriv(&self, u: f64) -> f64 {
        self.d0 + self.k * (u - self.u0)
    }
}

#[derive(Clone, Debug)]
pub enum FluxKind {
    Quadratic { a: f64, b: f64, c: f64 },
    Tabulated { samples: Vec<(f64, f64)>, left: Piece, pieces: Vec<Piece> },
}

/// A strictly convex, superlinear, C¹ flux.
#[derive(Clone, Debug)]
pub struct ConvexFlux {
    kind: FluxKind,
    theta: f64,
    fmin: f64,
    hint: (f64, f64),
}

const VALUE_TOL: f64 = 1e-12;

impl ConvexFlux {
    pub fn quadratic(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() || !b.is_finite() || !c.is_finite() {
            return Err(Error::Input(format!("quadratic flux needs finite a>0, got a={a}")));
        }
        let theta = -b / (2.0 * a);
        let fmin = c - b * b / (4.0 * a);
        Ok(ConvexFlux { kind: FluxKind::Quadratic { a, b, c }, theta, fmin, hint: (theta - 10.0, theta + 10.0) })
    }

    /// `u²/2`.
    pub fn burgers() -> Self {
        Self::quadratic(0.5, 0.0, 0.0).unwrap()
    }

    /// C¹ convex interpolant of `(u, f(u))` samples.
    ///
    /// The derivative is piecewise linear with one extra knot per interval,
    /// so the interpolant is a convex quadratic spline reproducing every sample.
    /// Outside the samples it continues as a quadratic with the end curvature.
    pub fn tabulated(samples: &[(f64, f64)]) -> Result<Self> {
        let n = samples.len();
        if n < 3 {
            return Err(Error::Input("tabulated flux needs at least 3 samples".into()));
        }
        if samples.iter().any(|(u, f)| !u.is_finite() || !f.is_finite()) {
            return Err(Error::Input("tabulated flux has non-finite samples".into()));
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Input("tabulated flux abscissae must be strictly increasing".into()));
        }
        let h: Vec<f64> = samples.windows(2).map(|w| w[1].0 - w[0].0).collect();
        let m: Vec<f64> = samples.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
        if m.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Input("tabulated flux is not strictly convex (secant slopes must increase)".into()));
        }
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            d[i] = (h[i] * m[i - 1] + h[i - 1] * m[i]) / (h[i - 1] + h[i]);
        }
        d[0] = 2.0 * m[0] - d[1];
        d[n - 1] = 2.0 * m[n - 2] - d[n - 2];

        let mut pieces = Vec::with_capacity(2 * n);
        for i in 0..n - 1 {
            let (u0, f0) = samples[i];
            let span = d[i + 1] - d[i];
            let alpha = (m[i] - d[i]) / span;
            let lo = (1.0 - 2.0 * alpha).max(0.0);
            let hi = (2.0 - 2.0 * alpha).min(1.0);
            let lambda = 0.5 * (lo + hi);
            let dbar = 2.0 * m[i] - lambda * d[i] - (1.0 - lambda) * d[i + 1];
            let xi = u0 + lambda * h[i];
            let k1 = (dbar - d[i]) / (lambda * h[i]);
            let k2 = (d[i + 1] - dbar) / ((1.0 - lambda) * h[i]);
            if !(k1 > 0.0 && k2 > 0.0) {
                return Err(Error::Input(format!("tabulated flux: no convex C¹ interpolant on interval {i}")));
            }
            let first = Piece { u0, f0, d0: d[i], k: k1 };
            pieces.push(first);
            pieces.push(Piece { u0: xi, f0: first.eval(xi), d0: dbar, k: k2 });
        }
        let last = *pieces.last().unwrap();
        let (un, fn_) = samples[n - 1];
        pieces.push(Piece { u0: un, f0: fn_, d0: d[n - 1], k: last.k });
        let left = Piece { u0: samples[0].0, f0: samples[0].1, d0: d[0], k: pieces[0].k };

        let mut flux = ConvexFlux {
            kind: FluxKind::Tabulated { samples: samples.to_vec(), left, pieces },
            theta: 0.0,
            fmin: 0.0,
            hint: (samples[0].0, un),
        };
        flux.theta = flux.deriv_inv(0.0);
        flux.fmin = flux.eval(flux.theta);
        Ok(flux)
    }

    pub fn kind(&self) -> &FluxKind {
        &self.kind
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Value at the minimum.
    pub fn min_value(&self) -> f64 {
        self.fmin
    }

    /// Interval where the data defining the flux lives.
    pub fn domain_hint(&self) -> (f64, f64) {
        self.hint
    }

    fn piece(&self, u: f64) -> Piece {
        match &self.kind {
            FluxKind::Tabulated { left, pieces, .. } => {
                if u < pieces[0].u0 {
                    *left
                } else {
                    pieces[pieces.partition_point(|p| p.u0 <= u) - 1]
                }
            }
            FluxKind::Quadratic { .. } => unreachable!(),
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self.kind {
            FluxKind::Quadratic { a, b, c } => (a * u + b) * u + c,
            FluxKind::Tabulated { .. } => self.piece(u).eval(u),
        }
    }

    pub fn deriv(&self, u: f64) -> f64 {
        match self.kind {
            FluxKind::Quadratic { a, b, .. } => 2.0 * a * u + b,
            FluxKind::Tabulated { .. } => self.piece(u).deriv(u),
        }
    }

    /// Inverse of the derivative, defined on all of ℝ.
    pub fn deriv_inv(&self, p: f64) -> f64 {
        match &self.kind {
            FluxKind::Quadratic { a, b, .. } => (p - b) / (2.0 * a),
            FluxKind::Tabulated { left, pieces, .. } => {
                let pc = if p < pieces[0].d0 { *left } else { pieces[pieces.partition_point(|q| q.d0 <= p) - 1] };
                pc.u0 + (p - pc.d0) / pc.k
            }
        }
    }

    /// Convex dual `sup_u (p u - f(u))`.
    pub fn dual(&self, p: f64) -> f64 {
        match self.kind {
            FluxKind::Quadratic { a, b, c } => (p - b) * (p - b) / (4.0 * a) - c,
            FluxKind::Tabulated { .. } => {
                let u = self.deriv_inv(p);
                p * u - self.eval(u)
            }
        }
    }

    /// Inverse of the restriction to one branch.
    pub fn inv_branch(&self, side: Branch, v: f64) -> Result<f64> {
        let gap = v - self.fmin;
        if gap < -VALUE_TOL * (1.0 + v.abs()) || !v.is_finite() {
            return Err(Error::Domain(format!("flux value {v} below minimum {}", self.fmin)));
        }
        let gap = gap.max(0.0);
        match self.kind {
            FluxKind::Quadratic { a, .. } => {
                let r = (gap / a).sqrt();
                Ok(match side {
                    Branch::Plus => self.theta + r,
                    Branch::Minus => self.theta - r,
                })
            }
            FluxKind::Tabulated { .. } => {
                if gap == 0.0 {
                    return Ok(self.theta);
                }
                let th = self.theta;
                let root = match side {
                    Branch::Plus => roots::solve_increasing_from(|u| self.eval(u) - v, th, roots::ROOT_TOL),
                    Branch::Minus => roots::solve_increasing_from(|w| self.eval(-w) - v, -th, roots::ROOT_TOL).map(|w| -w),
                };
                root.ok_or_else(|| Error::Solve(format!("branch inverse failed for v={v}")))
            }
        }
    }

    /// The flux `w ↦ f(-w)`.
    pub fn reflected(&self) -> ConvexFlux {
        match &self.kind {
            FluxKind::Quadratic { a, b, c } => ConvexFlux::quadratic(*a, -b, *c).unwrap(),
            FluxKind::Tabulated { samples, .. } => {
                let s: Vec<(f64, f64)> = samples.iter().rev().map(|&(u, f)| (-u, f)).collect();
                ConvexFlux::tabulated(&s).expect("reflection keeps convexity")
            }
        }
    }

    /// Slope of the chord between two states; the derivative when they coincide.
    pub fn chord(&self, a: f64, b: f64) -> f64 {
        if (a - b).abs() <= 1e-13 * (1.0 + a.abs().max(b.abs())) {
            self.deriv(0.5 * (a + b))
        } else {
            (self.eval(a) - self.eval(b)) / (a - b)
        }
    }

    /// Upper bound of `|f'|` over `[lo, hi]`.
    pub fn max_speed(&self, lo: f64, hi: f64) -> f64 {
        self.deriv(lo).abs().max(self.deriv(hi).abs())
    }
}

/// The pair `(f, g)`: `g` acts on `x < 0`, `f` on `x > 0`.
#[derive(Clone, Debug)]
pub struct FluxPair {
    pub f: ConvexFlux,
    pub g: ConvexFlux,
    theta_bar: f64,
    iplus_lo: f64,
    iminus_lo: f64,
    g_above: bool,
}

/// Result of a composite map evaluation that may have been clamped at a branch end.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Clamped {
    pub value: f64,
    pub clamped: bool,
}

impl FluxPair {
    pub fn new(f: ConvexFlux, g: ConvexFlux) -> Result<Self> {
        let (ff, gg) = (f.min_value(), g.min_value());
        let g_above = gg >= ff;
        let (theta_bar, iplus_lo, iminus_lo) = if g_above {
            let tb = f.inv_branch(Branch::Plus, gg)?;
            (tb, f.deriv(tb), 0.0)
        } else {
            let tb = g.inv_branch(Branch::Minus, ff)?;
            let gb = g.inv_branch(Branch::Plus, ff)?;
            (tb, 0.0, g.deriv(gb))
        };
        Ok(FluxPair { f, g, theta_bar, iplus_lo, iminus_lo, g_above })
    }

    pub fn quadratic_pair() -> Self {
        FluxPair::new(ConvexFlux::burgers(), ConvexFlux::quadratic(1.0, 0.0, 0.0).unwrap()).unwrap()
    }

    /// True when `g(θ_g) ≥ f(θ_f)`.
    pub fn g_above(&self) -> bool {
        self.g_above
    }

    pub fn theta_bar(&self) -> f64 {
        self.theta_bar
    }

    /// Left end of the `h₊` domain.
    pub fn iplus_lo(&self) -> f64 {
        self.iplus_lo
    }

    /// Left end of the `h₋` domain.
    pub fn iminus_lo(&self) -> f64 {
        self.iminus_lo
    }

    /// `θ_g` on `x < 0`, `θ_f` on `x ≥ 0`.
    pub fn stationary(&self, x: f64) -> f64 {
        if x < 0.0 {
            self.g.theta()
        } else {
            self.f.theta()
        }
    }

    /// The flux acting at `x`; `x = 0` counts as the f side.
    pub fn flux_at(&self, x: f64) -> &ConvexFlux {
        if x < 0.0 {
            &self.g
        } else {
            &self.f
        }
    }

    /// Velocity `η` of state `u` at position `x`.
    pub fn speed_at(&self, x: f64, u: f64) -> f64 {
        self.flux_at(x).deriv(u)
    }

    fn check_domain(p: f64, lo: f64, name: &str) -> Result<f64> {
        let tol = 1e-10 * (1.0 + lo.abs());
        if !p.is_finite() || p < lo - tol {
            return Err(Error::Domain(format!("{name}({p}) outside domain [{lo}, ∞)")));
        }
        Ok(p.max(lo))
    }

    /// `g' ∘ g₊⁻¹ ∘ f ∘ (f')⁻¹`.
    pub fn h_plus(&self, p: f64) -> Result<f64> {
        let p = Self::check_domain(p, self.iplus_lo, "h+")?;
        let v = self.f.eval(self.f.deriv_inv(p)).max(self.g.min_value());
        Ok(self.g.deriv(self.g.inv_branch(Branch::Plus, v)?).max(0.0))
    }

    /// `f' ∘ f₋⁻¹ ∘ g ∘ (g')⁻¹`.
    pub fn h_minus(&self, p: f64) -> Result<f64> {
        let p = Self::check_domain(p, self.iminus_lo, "h-")?;
        let v = self.g.eval(self.g.deriv_inv(p)).max(self.f.min_value());
        Ok(self.f.deriv(self.f.inv_branch(Branch::Minus, v)?).min(0.0))
    }

    /// Inverse of `h₊`: the f-side slope whose interface partner has g-slope `q ≥ h₊(I₊)`.
    pub fn h_plus_inv(&self, q: f64) -> Result<f64> {
        let q0 = if self.g_above { 0.0 } else { self.h_plus(self.iplus_lo)? };
        let q = Self::check_domain(q, q0, "h+^-1")?;
        let v = self.g.eval(self.g.deriv_inv(q)).max(self.f.min_value());
        Ok(self.f.deriv(self.f.inv_branch(Branch::Plus, v)?).max(self.iplus_lo))
    }

    /// `g' g₊⁻¹ f(u)`, clamping at `θ_g` when `f(u) < g(θ_g)`.
    pub fn g_slope_of_f_state(&self, u: f64) -> Clamped {
        let v = self.f.eval(u);
        let floor = self.g.min_value();
        let clamped = v < floor;
        let b = self.g.inv_branch(Branch::Plus, v.max(floor)).unwrap_or(self.g.theta());
        Clamped { value: self.g.deriv(b), clamped }
    }

    /// `f' f₋⁻¹ g(u)`, clamping at `θ_f` when `g(u) < f(θ_f)`.
    pub fn f_slope_of_g_state(&self, u: f64) -> Clamped {
        let v = self.g.eval(u);
        let floor = self.f.min_value();
        let clamped = v < floor;
        let a = self.f.inv_branch(Branch::Minus, v.max(floor)).unwrap_or(self.f.theta());
        Clamped { value: self.f.deriv(a), clamped }
    }

    /// The pair seen under `x ↦ -x`, `u ↦ -u`: the new f is `w ↦ g(-w)`, the new g is `w ↦ f(-w)`.
    pub fn mirrored(&self) -> FluxPair {
        FluxPair::new(self.g.reflected(), self.f.reflected()).expect("mirror of a valid pair")
    }

    /// `min{f*(0), g*(0)}`, the dwell cost on the interface.
    pub fn dwell_cost(&self) -> f64 {
        self.f.dual(0.0).min(self.g.dual(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f() -> ConvexFlux {
        ConvexFlux::burgers()
    }
    fn g() -> ConvexFlux {
        ConvexFlux::quadratic(1.0, 0.0, 0.0).unwrap()
    }

    fn tab() -> ConvexFlux {
        let s: Vec<(f64, f64)> = (-20..=20)
            .map(|i| {
                let u = i as f64 * 0.25;
                (u, (u - 0.3).powi(2) + 0.1 * (u - 0.3).powi(4) / 10.0 - 0.2)
            })
            .collect();
        ConvexFlux::tabulated(&s).unwrap()
    }

    #[test]
    fn quadratic_examples() {
        assert_eq!(f().eval(2.0), 2.0);
        assert_eq!(g().eval(0.0), 0.0);
        assert_eq!(f().eval(-3.0), 4.5);
        assert_eq!(f().deriv(2.0), 2.0);
        assert_eq!(g().deriv(1.0), 2.0);
        assert_eq!(f().deriv(f().theta()), 0.0);
        assert_eq!(f().dual(3.0), 4.5);
        assert_eq!(g().dual(2.0), 1.0);
        assert_eq!(f().inv_branch(Branch::Plus, 2.0).unwrap(), 2.0);
        assert_eq!(g().inv_branch(Branch::Minus, 4.0).unwrap(), -2.0);
        assert!(matches!(f().inv_branch(Branch::Plus, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn dual_of_g_by_grid_maximization() {
        // sup_u (2u - u²) by brute force
        let best = (0..=40000).map(|i| -2.0 + i as f64 * 1e-4).map(|u| 2.0 * u - u * u).fold(f64::MIN, f64::max);
        assert!((g().dual(2.0) - best).abs() < 1e-7);
    }

    #[test]
    fn dual_at_min_slope() {
        for fl in [f(), g(), ConvexFlux::quadratic(2.0, -1.0, 3.0).unwrap(), tab()] {
            let p = fl.deriv(fl.theta());
            assert!((fl.dual(p) + fl.eval(fl.theta())).abs() < 1e-10);
        }
    }

    #[test]
    fn h_maps_closed_form() {
        let pair = FluxPair::quadratic_pair();
        assert!((pair.h_plus(2.0).unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((pair.h_minus(2.0).unwrap() + 2f64.sqrt()).abs() < 1e-12);
        assert!(pair.h_plus(pair.f.deriv(pair.theta_bar())).unwrap().abs() < 1e-12);
        assert!((pair.h_plus_inv(2.0 * 2f64.sqrt()).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn theta_bar_for_both_orderings() {
        let up = FluxPair::new(f(), ConvexFlux::quadratic(1.0, 0.0, 0.5).unwrap()).unwrap();
        assert!(up.g_above());
        assert!((up.f.eval(up.theta_bar()) - 0.5).abs() < 1e-12);
        assert!(up.f.deriv(up.theta_bar()) >= 0.0);
        assert!(up.h_plus(up.iplus_lo()).unwrap().abs() < 1e-9);
        assert!(up.h_plus(up.iplus_lo() - 0.1).is_err());

        let down = FluxPair::new(ConvexFlux::quadratic(0.5, 0.0, 0.5).unwrap(), g()).unwrap();
        assert!(!down.g_above());
        assert!((down.g.eval(down.theta_bar()) - 0.5).abs() < 1e-12);
        assert!(down.g.deriv(down.theta_bar()) <= 0.0);
        assert!(down.h_plus(-0.1).is_err());
        // the branch inverse is a square root near the minimum, so rounding in iminus_lo is amplified
        assert!(down.h_minus(down.iminus_lo()).unwrap().abs() < 1e-7);
    }

    #[test]
    fn tabulated_reproduces_samples_and_is_c1() {
        let t = tab();
        if let FluxKind::Tabulated { samples, .. } = t.kind().clone() {
            for (u, v) in samples {
                assert!((t.eval(u) - v).abs() < 1e-12);
                let h = 1e-7;
                let lhs = (t.eval(u) - t.eval(u - h)) / h;
                let rhs = (t.eval(u + h) - t.eval(u)) / h;
                assert!((lhs - rhs).abs() < 1e-5);
            }
        }
        let (x, _) = roots::golden(|u| t.eval(u), -5.0, 5.0, 1e-12);
        assert!((x - t.theta()).abs() < 1e-6);
        assert!((t.theta() - 0.3).abs() < 0.05);
    }

    #[test]
    fn tabulated_rejects_nonconvex() {
        assert!(ConvexFlux::tabulated(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(ConvexFlux::tabulated(&[(0.0, 0.0), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn superlinear_growth() {
        for fl in [f(), g(), tab()] {
            for u in [1e2, 1e4] {
                assert!(fl.eval(u) / u > 40.0);
                assert!(fl.eval(-u) / u > 40.0);
            }
        }
    }

    #[test]
    fn derivative_strictly_increasing_on_grid() {
        for fl in [f(), g(), tab()] {
            let d: Vec<f64> = (-600..600).map(|i| fl.deriv(i as f64 * 0.01)).collect();
            assert!(d.windows(2).all(|w| w[1] > w[0]));
            let th = fl.theta();
            assert!((-600..600).all(|i| fl.eval(i as f64 * 0.01) >= fl.eval(th) - 1e-14));
        }
    }

    #[test]
    fn reflection() {
        let t = tab();
        let r = t.reflected();
        for i in -30..30 {
            let u = i as f64 * 0.17;
            assert!((r.eval(u) - t.eval(-u)).abs() < 1e-10);
        }
        let m = FluxPair::quadratic_pair().mirrored();
        assert!((m.f.eval(1.5) - 2.25).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn h_plus_strictly_increasing(p1 in 0.0f64..50.0, dp in 1e-6f64..10.0) {
            let pair = FluxPair::quadratic_pair();
            prop_assert!(pair.h_plus(p1 + dp).unwrap() > pair.h_plus(p1).unwrap());
            let up = FluxPair::new(tab(), g()).unwrap();
            let lo = up.iplus_lo();
            prop_assert!(up.h_plus(lo + p1 + dp).unwrap() > up.h_plus(lo + p1).unwrap());
        }

        #[test]
        fn h_minus_strictly_decreasing(p1 in 0.0f64..50.0, dp in 1e-6f64..10.0) {
            let pair = FluxPair::quadratic_pair();
            prop_assert!(pair.h_minus(p1 + dp).unwrap() < pair.h_minus(p1).unwrap());
        }

        #[test]
        fn fenchel_young(u in -20.0f64..20.0, p in -20.0f64..20.0) {
            for fl in [f(), g(), ConvexFlux::quadratic(0.7, 1.3, -2.0).unwrap(), tab()] {
                prop_assert!(fl.eval(u) + fl.dual(p) >= p * u - 1e-8);
                let q = fl.deriv(u);
                prop_assert!((fl.eval(u) + fl.dual(q) - q * u).abs() < 1e-8 * (1.0 + q.abs() * u.abs()));
            }
        }

        #[test]
        fn branch_inverse_roundtrip(s in 0.0f64..15.0) {
            for fl in [f(), g(), ConvexFlux::quadratic(0.7, 1.3, -2.0).unwrap(), tab()] {
                let up = fl.theta() + s;
                let dn = fl.theta() - s;
                prop_assert!((fl.inv_branch(Branch::Plus, fl.eval(up)).unwrap() - up).abs() < 1e-8);
                prop_assert!((fl.inv_branch(Branch::Minus, fl.eval(dn)).unwrap() - dn).abs() < 1e-8);
            }
        }

        #[test]
        fn dual_involution_on_quadratics(a in 0.1f64..3.0, b in -2.0f64..2.0, c in -2.0f64..2.0, u in -5.0f64..5.0) {
            let fl = ConvexFlux::quadratic(a, b, c).unwrap();
            // f**(u) = sup_p (p u - f*(p)), maximized numerically
            let (_, neg) = roots::golden(|p| fl.dual(p) - p * u, -200.0, 200.0, 1e-12);
            prop_assert!((-neg - fl.eval(u)).abs() < 1e-8);
        }
    }
}
