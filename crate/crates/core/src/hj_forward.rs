//! Forward solver through the value function of the control-curve problem.
//!
//! For step initial data every minimization over the exit point is exact
//! piece by piece (the cost is convex on each piece of `u₀`); only the
//! interface times are searched numerically, on a fixed table of arrival
//! costs shared by all evaluation points.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flux::{Branch, ConvexFlux, FluxPair};
use crate::roots;
use crate::stepfn::StepFn;

#[derive(Clone, Copy, Debug)]
pub struct ForwardParams {
    /// Resolution of the interface time table on `[0, T]`.
    pub n_tau: usize,
    /// Offset used to sample one-sided traces at `x = ±eps`.
    pub eps: f64,
    /// Relative tolerance under which two costs count as tied.
    pub tie_tol: f64,
    /// Coarse scan points when locating `R₁(t)`, `L₁(t)`.
    pub n_scan: usize,
}

impl Default for ForwardParams {
    fn default() -> Self {
        ForwardParams { n_tau: 2048, eps: 1e-7, tie_tol: 1e-9, n_scan: 64 }
    }
}

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub nt: usize,
}

impl GridSpec {
    pub fn xs(&self) -> Vec<f64> {
        linspace(self.x_min, self.x_max, self.nx)
    }
}

pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Where the minimizing curve of a point starts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Origin {
    /// One segment from `(y, 0)`.
    Classical { y: f64 },
    /// Leaves the interface at time `tau`.
    Interface { tau: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct PointValue {
    pub value: f64,
    pub u: f64,
    pub origin: Origin,
    /// Some minimizer touches the interface away from `t = 0`.
    pub interface_active: bool,
    /// Some minimizer is a single segment.
    pub classical_active: bool,
}

/// A piecewise-affine path `(x, t)` from time 0 to the evaluation point.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlCurve {
    pub vertices: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveClass {
    /// One segment.
    C0,
    /// Three segments with a dwell on `x = 0`.
    Cr,
    /// Everything else, here two segments meeting on the interface.
    Cb,
}

impl ControlCurve {
    pub fn class(&self) -> CurveClass {
        match self.vertices.len() {
            2 => CurveClass::C0,
            4 => CurveClass::Cr,
            _ => CurveClass::Cb,
        }
    }

    pub fn segments(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Segment structure rules: at most 3, none crossing `x = 0`, a middle one on the interface.
    pub fn is_valid(&self) -> bool {
        let v = &self.vertices;
        if v.len() < 2 || v.len() > 4 {
            return false;
        }
        let no_cross = v.windows(2).all(|w| w[0].0 * w[1].0 >= 0.0);
        let middle_ok = v.len() != 4 || (v[1].0 == 0.0 && v[2].0 == 0.0);
        no_cross && middle_ok && v.windows(2).all(|w| w[1].1 >= w[0].1)
    }
}

/// Extended state range reachable from data in `[lo, hi]`, including interface partners.
pub fn extended_range(pair: &FluxPair, lo: f64, hi: f64) -> (f64, f64) {
    let mut a = lo.min(pair.f.theta()).min(pair.g.theta());
    let mut b = hi.max(pair.f.theta()).max(pair.g.theta());
    for &u in &[a, b] {
        for (src, dst) in [(&pair.g, &pair.f), (&pair.f, &pair.g)] {
            let v = src.eval(u).max(dst.min_value());
            if let (Ok(p), Ok(m)) = (dst.inv_branch(Branch::Plus, v), dst.inv_branch(Branch::Minus, v)) {
                a = a.min(m);
                b = b.max(p);
            }
        }
    }
    (a, b)
}

/// Pointwise solver for step data with a precomputed interface table.
pub struct ForwardSolver<'a> {
    pair: &'a FluxPair,
    u0: &'a StepFn,
    pieces: Vec<(f64, f64, f64)>,
    t_max: f64,
    dtau: f64,
    // prefix minima of w0(s) - s*m on the tau grid
    prefix: Vec<f64>,
    dwell: f64,
    params: ForwardParams,
    reach: f64,
}

impl<'a> ForwardSolver<'a> {
    pub fn new(u0: &'a StepFn, pair: &'a FluxPair, t_max: f64, params: ForwardParams) -> Result<Self> {
        if !(t_max > 0.0) || !t_max.is_finite() {
            return Err(Error::Input(format!("final time must be positive, got {t_max}")));
        }
        let n = params.n_tau.max(8);
        let pieces: Vec<_> = u0.pieces().collect();
        let (lo, hi) = extended_range(pair, u0.min_value(), u0.max_value());
        let speed = pair.f.max_speed(lo, hi).max(pair.g.max_speed(lo, hi));
        let mut s = ForwardSolver {
            pair,
            u0,
            pieces,
            t_max,
            dtau: t_max / n as f64,
            prefix: Vec::new(),
            dwell: pair.dwell_cost(),
            params,
            reach: speed * t_max,
        };
        let phi: Vec<f64> = (0..=n).into_par_iter().map(|k| s.phi(k as f64 * s.dtau)).collect();
        let mut prefix = Vec::with_capacity(n + 1);
        let mut run = f64::INFINITY;
        for p in phi {
            run = run.min(p);
            prefix.push(run);
        }
        if prefix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("initial data gives non-finite interface costs".into()));
        }
        s.prefix = prefix;
        Ok(s)
    }

    pub fn pair(&self) -> &FluxPair {
        self.pair
    }

    /// Largest distance a wave can travel by `t_max`.
    pub fn reach(&self) -> f64 {
        self.reach
    }

    fn v0(&self, y: f64) -> f64 {
        self.u0.primitive(y)
    }

    // cheapest arrival at (0, s) straight from the initial line, with the flux value carried in
    fn arrival(&self, s: f64) -> (f64, f64) {
        if s <= 0.0 {
            return (self.v0(0.0), f64::NAN);
        }
        let mut best = (f64::INFINITY, f64::NAN);
        for &(l, r, u) in &self.pieces {
            if l < 0.0 {
                let target = -s * self.pair.g.deriv(u);
                let y = target.clamp(l, r.min(0.0));
                let c = self.v0(y) + s * self.pair.g.dual(-y / s);
                if c < best.0 {
                    let state = if y == target { u } else { self.pair.g.deriv_inv(-y / s) };
                    best = (c, self.pair.g.eval(state));
                }
            }
            if r > 0.0 {
                let target = -s * self.pair.f.deriv(u);
                let y = target.clamp(l.max(0.0), r);
                let c = self.v0(y) + s * self.pair.f.dual(-y / s);
                if c < best.0 {
                    let state = if y == target { u } else { self.pair.f.deriv_inv(-y / s) };
                    best = (c, self.pair.f.eval(state));
                }
            }
        }
        best
    }

    fn phi(&self, s: f64) -> f64 {
        self.arrival(s).0 - s * self.dwell
    }

    /// Value function on the interface.
    pub fn interface_value(&self, tau: f64) -> f64 {
        let k = ((tau / self.dtau).floor() as usize).min(self.prefix.len() - 1);
        tau * self.dwell + self.prefix[k].min(self.phi(tau))
    }

    /// Flux through the interface just before `tau`, i.e. `-∂τ` of the interface value.
    fn interface_flux(&self, tau: f64) -> f64 {
        let k = ((tau / self.dtau).floor() as usize).min(self.prefix.len() - 1);
        let (a, q) = self.arrival(tau);
        let direct = a - tau * self.dwell;
        if direct <= self.prefix[k] || q.is_nan() {
            if q.is_nan() { -self.dwell } else { q }
        } else {
            -self.dwell
        }
    }

    fn side_flux(&self, x: f64) -> &ConvexFlux {
        self.pair.flux_at(x)
    }

    /// Value, state and minimizer class at `(x, t)` for `t ≤ t_max`; `x = 0` is the f side.
    pub fn point(&self, x: f64, t: f64) -> PointValue {
        let h = self.side_flux(x);
        let right = x >= 0.0;
        let scale = self.params.tie_tol;

        // single segments inside the closed half-plane of x
        let mut cands: Vec<(f64, f64, Origin)> = Vec::with_capacity(8);
        let mut best_c0 = f64::INFINITY;
        for &(l, r, uj) in &self.pieces {
            let (l, r) = if right { (l.max(0.0), r) } else { (l, r.min(0.0)) };
            if r < l {
                continue;
            }
            let target = x - t * h.deriv(uj);
            let y = target.clamp(l, r);
            let cost = self.v0(y) + t * h.dual((x - y) / t);
            let u = if y == target { uj } else { h.deriv_inv((x - y) / t) };
            best_c0 = best_c0.min(cost);
            cands.push((cost, u, Origin::Classical { y }));
        }

        // departures from the interface
        let dep = |tau: f64| self.interface_value(tau) + (t - tau) * h.dual(x / (t - tau));
        let k_last = (((t / self.dtau).ceil() as usize).max(1) - 1).min(self.prefix.len() - 1);
        let mut kb = 0;
        let mut vb = f64::INFINITY;
        for k in 0..=k_last {
            let tau = k as f64 * self.dtau;
            if tau >= t {
                break;
            }
            // on grid nodes the table already holds the interface value
            let v = tau * self.dwell + self.prefix[k] + (t - tau) * h.dual(x / (t - tau));
            if v < vb {
                vb = v;
                kb = k;
            }
        }
        let lo = (kb as f64 - 1.0).max(0.0) * self.dtau;
        let hi = ((kb + 1) as f64 * self.dtau).min(t * (1.0 - 1e-12));
        let (mut tau, mut vi) = roots::golden(dep, lo, hi, 1e-14 * t.max(1.0));
        if vb < vi {
            tau = kb as f64 * self.dtau;
            vi = vb;
        }
        // the departing state follows from the interface flux, which is exact on the table
        let mut u_if = h.deriv_inv(x / (t - tau));
        if tau > 1e-9 * t {
            let q = self.interface_flux(tau).max(h.min_value());
            let branch = if right { Branch::Plus } else { Branch::Minus };
            if let Ok(cand) = h.inv_branch(branch, q) {
                let slope = h.deriv(cand);
                let tau_c = if slope != 0.0 { t - x / slope } else { f64::NEG_INFINITY };
                if tau_c > 0.0 && tau_c < t && (tau_c - tau).abs() <= 2.0 * self.dtau {
                    u_if = cand;
                    tau = tau_c;
                }
            }
        }

        let best = best_c0.min(vi);
        // near the interface all costs differ by O(|x|), so the tie window shrinks with it
        let tol = scale * (1.0 + best.abs()) * x.abs().min(1.0);
        // active only when touching the interface strictly beats every single segment;
        // near-degenerate ties (a fan from the origin) stay classical
        let interface_active = vi < best_c0 - tol && tau > 1e-9 * t;
        if vi <= best + tol {
            cands.push((vi, u_if, Origin::Interface { tau }));
        }
        let mut pick: Option<(f64, f64, Origin)> = None;
        for c in cands.into_iter().filter(|c| c.0 <= best + tol) {
            // ties resolve to the left limit, which is the larger state for convex fluxes
            if pick.is_none_or(|p| c.1 > p.1) {
                pick = Some(c);
            }
        }
        let (_, u, origin) = pick.expect("at least one candidate");
        PointValue { value: best, u, origin, interface_active, classical_active: best_c0 <= best + tol }
    }

    /// `u(x, t)`; at `x = 0` the left limit is returned.
    pub fn state(&self, x: f64, t: f64) -> f64 {
        if x == 0.0 {
            self.point(-self.params.eps, t).u
        } else {
            self.point(x, t).u
        }
    }

    fn active(&self, x: f64, t: f64) -> bool {
        self.point(x, t).interface_active
    }

    // first x on one side where no minimizer touches the interface
    fn boundary(&self, t: f64, sign: f64) -> f64 {
        let eps = self.params.eps;
        if !self.active(sign * eps, t) {
            return 0.0;
        }
        let xmax = (self.reach * t / self.t_max).max(10.0 * eps) * 1.05 + eps;
        let n = self.params.n_scan.max(4);
        let mut prev = eps;
        for i in 1..=n {
            let xi = eps + (xmax - eps) * i as f64 / n as f64;
            if !self.active(sign * xi, t) {
                let (mut a, mut b) = (prev, xi);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if self.active(sign * m, t) {
                        a = m;
                    } else {
                        b = m;
                    }
                    if b - a < 1e-12 * (1.0 + b) {
                        break;
                    }
                }
                return sign * 0.5 * (a + b);
            }
            prev = xi;
        }
        sign * xmax
    }

    pub fn r1(&self, t: f64) -> f64 {
        self.boundary(t, 1.0)
    }

    pub fn l1(&self, t: f64) -> f64 {
        self.boundary(t, -1.0)
    }

    /// `(u(0-, t), u(0+, t))` sampled at `x = ∓eps·t`, so fans from the origin read as their edge state.
    pub fn traces(&self, t: f64) -> (f64, f64) {
        let e = self.params.eps * t;
        (self.point(-e, t).u, self.point(e, t).u)
    }
}

/// Sampled solution at the final time plus interface data on a time grid.
#[derive(Clone, Debug)]
pub struct SolutionField {
    pub t_final: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub r1: Vec<f64>,
    pub l1: Vec<f64>,
    pub trace_plus: Vec<f64>,
    pub trace_minus: Vec<f64>,
    /// `(x, t₊(x, T))` for grid points in `(0, R₁(T))`.
    pub tmap_plus: Vec<(f64, f64)>,
    /// `(x, t₋(x, T))` for grid points in `(L₁(T), 0)`.
    pub tmap_minus: Vec<(f64, f64)>,
    /// `(x, y(x, T))` for grid points outside `[L₁(T), R₁(T)]`.
    pub y: Vec<(f64, f64)>,
    pub r1_final: f64,
    pub l1_final: f64,
}

impl SolutionField {
    /// Piecewise-constant reading of the sampled profile (nearest sample).
    pub fn eval(&self, x: f64) -> f64 {
        let k = self.x.partition_point(|&g| g < x);
        if k == 0 {
            return self.u[0];
        }
        if k == self.x.len() {
            return self.u[k - 1];
        }
        if x - self.x[k - 1] <= self.x[k] - x {
            self.u[k - 1]
        } else {
            self.u[k]
        }
    }

    /// Trapezoid `L¹` distance to `w` over sample points inside `[a, b]`.
    pub fn l1_against(&self, a: f64, b: f64, w: impl Fn(f64) -> f64) -> f64 {
        let pts: Vec<(f64, f64)> =
            self.x.iter().zip(&self.u).filter(|(x, _)| **x >= a && **x <= b).map(|(&x, &u)| (x, (u - w(x)).abs())).collect();
        pts.windows(2).map(|p| 0.5 * (p[0].1 + p[1].1) * (p[1].0 - p[0].0)).sum()
    }
}

/// Solve with step data on `grid` at time `t_final`.
pub fn solve_profile(u0: &StepFn, pair: &FluxPair, t_final: f64, grid: &GridSpec, params: ForwardParams) -> Result<SolutionField> {
    if grid.nx == 0 || !(grid.x_max >= grid.x_min) {
        return Err(Error::Input("spatial grid is empty".into()));
    }
    let solver = ForwardSolver::new(u0, pair, t_final, params)?;
    let xs = grid.xs();
    let pts: Vec<PointValue> = xs
        .par_iter()
        .map(|&x| if x == 0.0 { solver.point(-params.eps, t_final) } else { solver.point(x, t_final) })
        .collect();
    let t_grid = linspace(0.0, t_final, grid.nt.max(1) + 1)[1..].to_vec();
    let bounds: Vec<(f64, f64, f64, f64)> = t_grid
        .par_iter()
        .map(|&t| {
            let (m, p) = solver.traces(t);
            (solver.r1(t), solver.l1(t), m, p)
        })
        .collect();
    let r1_final = bounds.last().map(|b| b.0).unwrap_or(0.0);
    let l1_final = bounds.last().map(|b| b.1).unwrap_or(0.0);

    let mut tmap_plus = Vec::new();
    let mut tmap_minus = Vec::new();
    let mut y = Vec::new();
    for (&x, p) in xs.iter().zip(&pts) {
        match p.origin {
            Origin::Interface { tau } if x > 0.0 && x < r1_final => tmap_plus.push((x, tau)),
            Origin::Interface { tau } if x < 0.0 && x > l1_final => tmap_minus.push((x, tau)),
            Origin::Classical { y: yy } if x >= r1_final || x <= l1_final => y.push((x, yy)),
            _ => {}
        }
    }
    Ok(SolutionField {
        t_final,
        u: pts.iter().map(|p| p.u).collect(),
        x: xs,
        r1: bounds.iter().map(|b| b.0).collect(),
        l1: bounds.iter().map(|b| b.1).collect(),
        trace_minus: bounds.iter().map(|b| b.2).collect(),
        trace_plus: bounds.iter().map(|b| b.3).collect(),
        t_grid,
        tmap_plus,
        tmap_minus,
        y,
        r1_final,
        l1_final,
    })
}

/// `(trace_minus, trace_plus)` over the time grid.
pub fn interface_traces(sol: &SolutionField) -> (Vec<f64>, Vec<f64>) {
    (sol.trace_minus.clone(), sol.trace_plus.clone())
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct InterfaceReport {
    pub rh_violation_measure: f64,
    pub entropy_violation_measure: f64,
    pub dt: f64,
}

/// Measure of sampled times where flux continuity or the interface entropy condition fails.
pub fn check_interface(sol: &SolutionField, pair: &FluxPair, tol: f64) -> InterfaceReport {
    let dt = sol.t_final / sol.t_grid.len().max(1) as f64;
    let mut rh = 0usize;
    let mut ent = 0usize;
    for (&um, &up) in sol.trace_minus.iter().zip(&sol.trace_plus) {
        let (fp, gm) = (pair.f.eval(up), pair.g.eval(um));
        if (fp - gm).abs() > tol * (1.0 + fp.abs().max(gm.abs())) {
            rh += 1;
        }
        if pair.f.deriv(up) > tol && pair.g.deriv(um) < -tol {
            ent += 1;
        }
    }
    InterfaceReport { rh_violation_measure: rh as f64 * dt, entropy_violation_measure: ent as f64 * dt, dt }
}

/// Search controls for the generic value evaluation.
#[derive(Clone, Copy, Debug)]
pub struct SearchParams {
    /// Bounds of `u₀`; they limit characteristic slopes.
    pub u_bounds: (f64, f64),
    pub n_grid: usize,
    pub tol: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams { u_bounds: (-1.0, 1.0), n_grid: 200, tol: 1e-10 }
    }
}

/// Value function at `(x, t)` for an arbitrary Lipschitz primitive `v0`, by direct search.
///
/// Exit points are searched on a grid plus golden refinement; curves touching the
/// interface are parametrized by their two interface times `t₁ ≤ t₂`, with
/// `t₁ = t₂` giving the two-segment curves.
pub fn value(v0: &dyn Fn(f64) -> f64, pair: &FluxPair, x: f64, t: f64, sp: &SearchParams) -> Result<(f64, ControlCurve)> {
    if !(t > 0.0) {
        return Err(Error::Input(format!("time must be positive, got {t}")));
    }
    let (lo, hi) = extended_range(pair, sp.u_bounds.0, sp.u_bounds.1);
    let check = |v: f64| if v.is_finite() { Ok(v) } else { Err(Error::Input("v0 returned a non-finite value".into())) };
    check(v0(x))?;
    let h = pair.flux_at(x);
    let right = x >= 0.0;
    let n = sp.n_grid.max(10);

    // one segment
    let (ya, yb) = (x - t * h.deriv(hi), x - t * h.deriv(lo));
    let (ya, yb) = if right { (ya.max(0.0), yb.max(0.0)) } else { (ya.min(0.0), yb.min(0.0)) };
    let c0 = |y: f64| v0(y) + t * h.dual((x - y) / t);
    let (y0, v_c0) = roots::grid_golden(c0, ya, yb, n, sp.tol);
    check(v_c0)?;

    // arrival at (0, s) from either side, best side kept
    let arrive = |s: f64| -> (f64, f64) {
        if s <= 0.0 {
            return (v0(0.0), 0.0);
        }
        let gl = |y: f64| v0(y) + s * pair.g.dual(-y / s);
        let fr = |y: f64| v0(y) + s * pair.f.dual(-y / s);
        let (yg, vg) = roots::grid_golden(gl, (-s * pair.g.deriv(hi)).min(0.0), (-s * pair.g.deriv(lo)).min(0.0), n, sp.tol);
        let (yf, vf) = roots::grid_golden(fr, (-s * pair.f.deriv(hi)).max(0.0), (-s * pair.f.deriv(lo)).max(0.0), n, sp.tol);
        if vg <= vf {
            (vg, yg)
        } else {
            (vf, yf)
        }
    };
    let m = pair.dwell_cost();
    let cap = t * (1.0 - 1e-12);
    let depart = |t2: f64| m * t2 + (t - t2) * h.dual(x / (t - t2));
    // best t2 ≥ t1 for the departure leg
    let best_t2 = |t1: f64| roots::grid_golden(depart, t1, cap, 64, sp.tol);
    let profile = |t1: f64| arrive(t1).0 - m * t1 + best_t2(t1).1;
    let (t1, _) = roots::grid_golden(profile, 0.0, cap, (n / 4).max(24), sp.tol);
    let t2 = best_t2(t1).0;
    let (a1, yarr) = arrive(t1);
    let v_if = a1 + m * (t2 - t1) + (t - t2) * h.dual(x / (t - t2));
    if v_c0 <= v_if {
        Ok((v_c0, ControlCurve { vertices: vec![(y0, 0.0), (x, t)] }))
    } else {
        let mut vertices = vec![(yarr, 0.0), (0.0, t1)];
        if t2 > t1 {
            vertices.push((0.0, t2));
        }
        vertices.push((x, t));
        if t1 <= 0.0 {
            vertices.remove(0);
            vertices[0] = (0.0, 0.0);
        }
        Ok((v_if, ControlCurve { vertices }))
    }
}
