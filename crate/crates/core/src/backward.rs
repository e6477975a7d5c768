//! Backward construction: initial data reaching a prescribed profile at time `T`.
//!
//! The plus case has `R ≥ 0`, nondecreasing `ρ ≤ 0` on `[0, R]` and `y` on the
//! rest of the line. The minus case is reduced to it by `(x, u) ↦ (-x, -u)`
//! with the fluxes swapped.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flux::{Branch, ConvexFlux, FluxPair};
use crate::hj_forward::{ForwardParams, ForwardSolver};
use crate::monofn::{clamp_segments_max, MonoFn, Seg};
use crate::roots;
use crate::stepfn::StepFn;

/// Largest `N` tried by [`refine`].
pub const N_MAX: usize = 1 << 14;

/// The interface-position function `ρ`.
#[derive(Clone)]
pub enum Rho {
    Step(StepFn),
    Func(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Rho {
    pub fn func(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Rho::Func(Arc::new(f))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Rho::Step(s) => s.eval(x),
            Rho::Func(f) => f(x),
        }
    }

    /// `x ↦ -ρ(-x)`.
    pub fn mirrored(&self) -> Rho {
        match self {
            Rho::Step(s) => Rho::Step(s.mirrored()),
            Rho::Func(f) => {
                let f = f.clone();
                Rho::Func(Arc::new(move |x| -f(-x)))
            }
        }
    }
}

impl std::fmt::Debug for Rho {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rho::Step(s) => fm.debug_tuple("Step").field(s).finish(),
            Rho::Func(_) => fm.write_str("Func(..)"),
        }
    }
}

/// Data `(R, ρ, y)` describing the target at time `T`.
#[derive(Clone, Debug)]
pub struct BackwardSpec {
    pub t_final: f64,
    pub r: f64,
    pub rho: Rho,
    pub y: MonoFn,
}

impl BackwardSpec {
    /// The same data seen in the reflected frame.
    pub fn mirrored(&self) -> BackwardSpec {
        BackwardSpec { t_final: self.t_final, r: -self.r, rho: self.rho.mirrored(), y: self.y.mirrored() }
    }

    fn validate_plus(&self) -> Result<()> {
        let (t, r) = (self.t_final, self.r);
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Input(format!("T must be positive, got {t}")));
        }
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::Input(format!("R must be finite and nonnegative, got {r}")));
        }
        let tol = 1e-9 * (1.0 + self.rho.eval(0.0).abs());
        if r > 0.0 {
            let samples: Vec<f64> = match &self.rho {
                Rho::Step(s) => s.pieces_in(0.0, r).iter().map(|p| p.2).collect(),
                Rho::Func(f) => (0..=256).map(|k| f(r * k as f64 / 256.0)).collect(),
            };
            if samples.iter().any(|v| !v.is_finite() || *v > tol) {
                return Err(Error::Input("rho must be finite and nonpositive on [0, R]".into()));
            }
            if samples.windows(2).any(|w| w[1] < w[0] - tol) {
                return Err(Error::Input("rho must be nondecreasing on [0, R]".into()));
            }
        }
        if self.y.eval(r) < -tol {
            return Err(Error::Input(format!("y(R+) = {} is negative", self.y.eval(r))));
        }
        Ok(())
    }
}

/// `t ∈ (0, T)` with `-ρ/t = h₊(x/(T - t))`; `ρ = 0` gives `t = 0`.
pub fn solve_tmap(pair: &FluxPair, x: f64, rho_x: f64, t_final: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Input(format!("solve_tmap needs x > 0, got {x}")));
    }
    if !(rho_x <= 0.0) {
        return Err(Error::Input(format!("solve_tmap needs rho <= 0, got {rho_x}")));
    }
    if rho_x == 0.0 {
        return Ok(0.0);
    }
    let lo_p = pair.iplus_lo();
    let t_lo = if lo_p > 0.0 { (t_final - x / lo_p).max(0.0) } else { 0.0 };
    if t_lo >= t_final {
        return Err(Error::Domain(format!("h+ undefined for x={x}, T={t_final}")));
    }
    let resid = |t: f64| -> f64 {
        if t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let p = (x / (t_final - t)).max(lo_p);
        pair.h_plus(p).map(|h| h + rho_x / t).unwrap_or(f64::NAN)
    };
    if t_lo > 0.0 && resid(t_lo) > 0.0 {
        return Err(Error::Domain(format!("no interface time for x={x}, rho={rho_x}, T={t_final}")));
    }
    let t_hi = t_final * (1.0 - 1e-15);
    if resid(t_hi) < 0.0 {
        return Ok(t_hi);
    }
    roots::bisect(resid, t_lo, t_hi, roots::ROOT_TOL * t_final)
        .ok_or_else(|| Error::Solve(format!("solve_tmap bracket failed at x={x}")))
}

/// States and interface times of one rarefaction fan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fan {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub t1: f64,
    pub t2: f64,
}

fn f_plus_of_g(pair: &FluxPair, b: f64) -> Result<f64> {
    pair.f.inv_branch(Branch::Plus, pair.g.eval(b))
}

/// The fan whose edges reach `(x1, T)` and `(x2, T)` from a source at `(ρ₀, 0)`.
pub fn solve_briemann(pair: &FluxPair, x1: f64, x2: f64, rho0: f64, t_final: f64) -> Result<Fan> {
    if !(0.0 <= x1 && x1 <= x2) || !x2.is_finite() {
        return Err(Error::Input(format!("solve_briemann needs 0 <= x1 <= x2, got {x1}, {x2}")));
    }
    if !(rho0 < 0.0) || !(t_final > 0.0) {
        return Err(Error::Input(format!("solve_briemann needs rho0 < 0 and T > 0, got {rho0}, {t_final}")));
    }
    let (f, g) = (&pair.f, &pair.g);
    let mut b_lo = g.deriv_inv(-rho0 / t_final).max(g.theta());
    if f.min_value() > g.min_value() {
        b_lo = b_lo.max(g.inv_branch(Branch::Plus, f.min_value())?);
    }
    let s1 = |b: f64| -> f64 {
        let a = match f_plus_of_g(pair, b) {
            Ok(a) => a,
            Err(_) => return f64::NAN,
        };
        f.deriv(a) * (t_final + rho0 / g.deriv(b))
    };
    let solve = |x: f64| -> Result<(f64, f64, f64)> {
        let b = if x <= 0.0 {
            b_lo
        } else {
            roots::solve_increasing_from(|b| s1(b) - x, b_lo, roots::ROOT_TOL)
                .ok_or_else(|| Error::Solve(format!("fan equation has no root for x={x}")))?
        };
        let r = s1(b) - x;
        if !(r.abs() <= 1e-9 * (1.0 + x)) {
            return Err(Error::Solve(format!("fan residual {r} at x={x}")));
        }
        Ok((f_plus_of_g(pair, b)?, b, -rho0 / g.deriv(b)))
    };
    let (a1, b1, t1) = solve(x1)?;
    let (a2, b2, t2) = if x2 == x1 { (a1, b1, t1) } else { solve(x2)? };
    Ok(Fan { a1, a2, b1, b2, t1, t2 })
}

/// Shock data joining two fans at a breakpoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bridge {
    pub rho3: f64,
    pub t3: f64,
    /// `(a₁, a₂, b₁, b₂)`: f-side states then g-side states.
    pub fan: (f64, f64, f64, f64),
    /// Speed of the g-side shock.
    pub s1: f64,
    /// Speed of the f-side shock.
    pub s2: f64,
}

/// The seed `ρ₃` whose g-side shock meets the interface when the f-side shock leaves for `(x₀, T)`.
pub fn bridge_shock(pair: &FluxPair, x0: f64, t1: f64, t2: f64, rho1: f64, rho2: f64, t_final: f64) -> Result<Bridge> {
    if !(t_final > t1 && t1 >= t2 && t2 > 0.0) {
        return Err(Error::Input(format!("bridge needs T > t1 >= t2 > 0, got T={t_final}, t1={t1}, t2={t2}")));
    }
    if !(rho1 <= rho2 && rho2 < 0.0) {
        return Err(Error::Input(format!("bridge needs rho1 <= rho2 < 0, got {rho1}, {rho2}")));
    }
    let g = &pair.g;
    let b1 = g.deriv_inv(-rho1 / t1);
    let b2 = g.deriv_inv(-rho2 / t2);
    let a1 = f_plus_of_g(pair, b1)?;
    let a2 = f_plus_of_g(pair, b2)?;
    let s2 = pair.f.chord(a1, a2);
    if !(s2 > 0.0) {
        return Err(Error::Solve(format!("f-side bridge shock has speed {s2}")));
    }
    let t3 = t_final - x0 / s2;
    let s1 = g.chord(b1, b2);
    Ok(Bridge { rho3: -s1 * t3, t3, fan: (a1, a2, b1, b2), s1, s2 })
}

/// Assembled initial data plus the intermediate construction data.
///
/// All fields except `u0` are in the construction frame: for the minus case
/// (`mirrored = true`) they describe the reflected problem.
#[derive(Clone, Debug)]
pub struct BackwardPlan {
    pub t_final: f64,
    pub r: f64,
    pub mirrored: bool,
    /// `x₀ = 0 < x₁ < … < x_M = R`.
    pub breakpoints: Vec<f64>,
    pub levels: Vec<f64>,
    pub fans: Vec<Fan>,
    pub seeds: Vec<f64>,
    /// Start of the left closing shock, if there is one.
    pub left_shock: Option<f64>,
    pub u0: StepFn,
    pair: FluxPair,
    y: MonoFn,
}

impl BackwardPlan {
    /// Discretized interface time `t^N(x)` (physical coordinates).
    pub fn tmap(&self, x: f64) -> Option<f64> {
        let xf = if self.mirrored { -x } else { x };
        let k = self.interval_of(xf)?;
        if xf <= 0.0 {
            return Some(self.fans[0].t1);
        }
        solve_tmap(&self.pair, xf, self.levels[k], self.t_final).ok()
    }

    fn interval_of(&self, x: f64) -> Option<usize> {
        let b = &self.breakpoints;
        if b.len() < 2 || x < 0.0 || x > self.r {
            return None;
        }
        Some((b.partition_point(|&v| v <= x).max(1) - 1).min(self.levels.len() - 1))
    }

    /// Profile at `T` that this plan aims for, in physical coordinates.
    pub fn target(&self, x: f64) -> f64 {
        if self.mirrored {
            -self.frame_target(-x)
        } else {
            self.frame_target(x)
        }
    }

    fn frame_target(&self, x: f64) -> f64 {
        let t = self.t_final;
        if x < 0.0 {
            self.pair.g.deriv_inv((x - self.y.eval(x).min(self.levels.first().copied().unwrap_or(0.0))) / t)
        } else if x > self.r || self.r == 0.0 {
            self.pair.f.deriv_inv((x - self.y.eval(x)) / t)
        } else {
            let k = self.interval_of(x).unwrap_or(0);
            let tau = if x == 0.0 { self.fans[0].t1 } else { solve_tmap(&self.pair, x, self.levels[k], t).unwrap_or(0.0) };
            self.pair.f.deriv_inv(x / (t - tau))
        }
    }

    /// Interface times `t₁ > t₂ > …` in fan order.
    pub fn times(&self) -> Vec<f64> {
        self.fans.iter().flat_map(|f| [f.t1, f.t2]).collect()
    }

    /// `(TV(g'(u₀)) on (z₁, z_M), T·C²·(|z₁| + |z₁ - z_M|))` with `C = 1/min tᵢ`.
    pub fn bv_check(&self) -> (f64, f64) {
        if self.levels.is_empty() {
            return (0.0, 0.0);
        }
        let u0 = if self.mirrored { self.u0.mirrored() } else { self.u0.clone() };
        let (z1, zm) = (self.levels[0], self.levels[self.levels.len() - 1]);
        let tv = u0.total_variation_in(z1, zm, |u| self.pair.g.deriv(u));
        let tmin = self.times().into_iter().fold(f64::INFINITY, f64::min);
        let c = 1.0 / tmin;
        (tv, self.t_final * c * c * (z1.abs() + (z1 - zm).abs()))
    }
}

/// `(x_{k-1}, x_k, z_k)` for the discretized `ρ`.
fn discretize(rho: &Rho, r: f64, n: usize, zcap: f64) -> Vec<(f64, f64, f64)> {
    let mut raw: Vec<(f64, f64, f64)> = match rho {
        Rho::Step(s) => s.pieces_in(0.0, r),
        Rho::Func(f) => {
            let (lo, hi) = (f(0.0), f(r));
            let range = (hi - lo).max(0.0);
            let m = n.max((n as f64 * range).floor() as usize + 1);
            let mut xs = vec![0.0];
            for k in 1..m {
                let c = lo + range * k as f64 / m as f64;
                let x = roots::bisect(|x| if f(x) <= c { -1.0 } else { 1.0 }, 0.0, r, 1e-14 * (1.0 + r)).unwrap_or(r);
                xs.push(x);
            }
            xs.push(r);
            xs.windows(2).map(|w| (w[0], w[1], f(0.5 * (w[0] + w[1])))).collect()
        }
    };
    raw.retain(|p| p.1 > p.0);
    let mut out: Vec<(f64, f64, f64)> = Vec::new();
    for (a, b, z) in raw {
        let z = z.min(zcap);
        match out.last_mut() {
            Some(last) if last.2 == z => last.1 = b,
            _ => out.push((a, b, z)),
        }
    }
    out
}

// edges that fall behind the previous one by rounding are snapped forward
fn push(pieces: &mut Vec<(f64, f64)>, z: f64, v: f64) {
    let z = match pieces.last() {
        Some(&(p, _)) if z < p && p - z <= 1e-9 * (1.0 + p.abs()) => p,
        _ => z,
    };
    pieces.push((z, v));
}

/// Classical single-flux data on the image of `y`: pieces `(z_left, state)`.
fn exterior(h: &ConvexFlux, segs: &[Seg], t: f64, per_unit: f64, pieces: &mut Vec<(f64, f64)>) {
    let st = |x: f64, z: f64| h.deriv_inv((x - z) / t);
    for &s in segs {
        match s {
            Seg::Linear { x0, x1, y0, y1 } => {
                if !x0.is_finite() || !x1.is_finite() {
                    let v = if x0.is_finite() { st(x0, y0) } else { st(x1, y1) };
                    push(pieces, y0, v);
                    continue;
                }
                if y1 <= y0 {
                    continue;
                }
                let slope = (y1 - y0) / (x1 - x0);
                if (slope - 1.0).abs() < 1e-12 {
                    push(pieces, y0, st(x0, y0));
                    continue;
                }
                let n = ((per_unit * ((x1 - x0) + (y1 - y0))).ceil() as usize).max(1);
                for j in 0..n {
                    let za = y0 + (y1 - y0) * j as f64 / n as f64;
                    let zm = y0 + (y1 - y0) * (j as f64 + 0.5) / n as f64;
                    push(pieces, za, st(x0 + (zm - y0) / slope, zm));
                }
            }
            Seg::Jump { x, left, right } => {
                let l = st(x, left);
                let r = st(x, right);
                let shock = x - h.chord(l, r) * t;
                push(pieces, left, l);
                push(pieces, shock, r);
            }
        }
    }
}

fn assemble(pieces: Vec<(f64, f64)>) -> Result<StepFn> {
    let mut it = pieces.into_iter().peekable();
    let left = match it.peek() {
        Some(&(z, v)) if z == f64::NEG_INFINITY => {
            it.next();
            v
        }
        _ => return Err(Error::Solve("exterior data has no left tail".into())),
    };
    let rest: Vec<(f64, f64)> = it.collect();
    StepFn::from_pieces(left, &rest)
}

/// Plus-case construction with `N` levels.
pub fn construct(spec: &BackwardSpec, pair: &FluxPair, n: usize) -> Result<BackwardPlan> {
    if n == 0 {
        return Err(Error::Input("N must be at least 1".into()));
    }
    spec.validate_plus()?;
    let t = spec.t_final;
    let r = spec.r;
    let per_unit = 4.0 * n as f64;
    let (f, g) = (&pair.f, &pair.g);
    let mut pieces: Vec<(f64, f64)> = Vec::new();

    if r == 0.0 {
        let (fm, gm) = (f.min_value(), g.min_value());
        if (fm - gm).abs() > 1e-12 * (1.0 + fm.abs()) {
            return Err(Error::Solve("R = 0 needs f and g to share their minimum value".into()));
        }
        let left = clamp_segments_max(&spec.y.segments_in(f64::NEG_INFINITY, 0.0), 0.0);
        exterior(g, &left, t, per_unit, &mut pieces);
        let y0m = spec.y.eval_left(0.0).min(0.0);
        let l = g.deriv_inv(-y0m / t).max(g.theta());
        let left_shock = -g.chord(l, g.theta()) * t;
        push(&mut pieces, left_shock, g.theta());
        push(&mut pieces, 0.0, f.theta());
        let y0p = spec.y.eval(0.0);
        let rr = f.deriv_inv(-y0p / t).min(f.theta());
        push(&mut pieces, -f.chord(f.theta(), rr) * t, rr);
        exterior(f, &spec.y.segments_in(0.0, f64::INFINITY), t, per_unit, &mut pieces);
        return Ok(BackwardPlan {
            t_final: t,
            r,
            mirrored: false,
            breakpoints: vec![],
            levels: vec![],
            fans: vec![],
            seeds: vec![],
            left_shock: Some(left_shock),
            u0: assemble(pieces)?,
            pair: pair.clone(),
            y: spec.y.clone(),
        });
    }

    let zcap = -1e-9 * t.max(spec.rho.eval(0.0).abs());
    let ivals = discretize(&spec.rho, r, n, zcap);
    let fans: Vec<Fan> = ivals
        .par_iter()
        .enumerate()
        .map(|(k, &(a, b, z))| solve_briemann(pair, a, b, z, t).map_err(|e| e.context(format!("interval {k}"))))
        .collect::<Result<_>>()?;
    let levels: Vec<f64> = ivals.iter().map(|p| p.2).collect();
    let mut breakpoints: Vec<f64> = ivals.iter().map(|p| p.0).collect();
    breakpoints.push(r);
    let m = levels.len();
    let mut seeds = Vec::with_capacity(m.saturating_sub(1));
    for k in 0..m - 1 {
        let br = bridge_shock(pair, breakpoints[k + 1], fans[k].t2, fans[k + 1].t1, levels[k], levels[k + 1], t)
            .map_err(|e| e.context(format!("bridge {k}")))?;
        seeds.push(br.rho3);
    }

    // left exterior and closing shock
    let z1 = levels[0];
    let left = clamp_segments_max(&spec.y.segments_in(f64::NEG_INFINITY, 0.0), z1);
    exterior(g, &left, t, per_unit, &mut pieces);
    let y0m = spec.y.eval_left(0.0).min(z1);
    let l = g.deriv_inv(-y0m / t);
    let b1 = fans[0].b1;
    let tol = 1e-10 * (1.0 + b1.abs());
    let mut left_shock = None;
    if l < b1 - tol {
        return Err(Error::Solve(format!("left closure state {l} below first fan state {b1}")));
    } else if l > b1 + tol {
        let s = -g.chord(l, b1) * t;
        push(&mut pieces, y0m, l);
        push(&mut pieces, s, b1);
        left_shock = Some(s);
    } else {
        push(&mut pieces, y0m, b1);
    }

    for k in 0..m {
        push(&mut pieces, levels[k], fans[k].b2);
        if k + 1 < m {
            push(&mut pieces, seeds[k], fans[k + 1].b1);
        }
    }

    // right closure
    let last = fans[m - 1];
    let yr = spec.y.eval(r);
    let c = f.deriv_inv((r - yr) / t);
    let sigma2 = f.chord(last.a2, c);
    if sigma2 <= r / t {
        push(&mut pieces, 0.0, last.a2);
        push(&mut pieces, r - sigma2 * t, c);
    } else {
        let tau0 = t - r / sigma2;
        let v = f.eval(c);
        if v < g.min_value() {
            return Err(Error::Solve(format!("right closure flux {v} below min g")));
        }
        let side = if c >= f.theta() { Branch::Plus } else { Branch::Minus };
        let beta = g.inv_branch(side, v)?;
        let s1 = g.chord(last.b2, beta);
        if !(s1 > 0.0) {
            return Err(Error::Solve(format!("right closure g-shock speed {s1} is not positive")));
        }
        let sm = -s1 * tau0;
        if sm <= levels[m - 1] {
            return Err(Error::Solve("right closure shock starts left of the last level".into()));
        }
        push(&mut pieces, sm, beta);
        push(&mut pieces, 0.0, c);
    }
    exterior(f, &spec.y.segments_in(r, f64::INFINITY), t, per_unit, &mut pieces);

    Ok(BackwardPlan {
        t_final: t,
        r,
        mirrored: false,
        breakpoints,
        levels,
        fans,
        seeds,
        left_shock,
        u0: assemble(pieces)?,
        pair: pair.clone(),
        y: spec.y.clone(),
    })
}

/// Minus-case construction (`R ≤ 0`), via the reflected plus problem.
pub fn construct_minus(spec: &BackwardSpec, pair: &FluxPair, n: usize) -> Result<BackwardPlan> {
    if !(spec.r <= 0.0) {
        return Err(Error::Input(format!("construct_minus needs R <= 0, got {}", spec.r)));
    }
    let mut plan = construct(&spec.mirrored(), &pair.mirrored(), n)?;
    plan.mirrored = true;
    plan.u0 = plan.u0.mirrored();
    Ok(plan)
}

/// Dispatch on the sign of `R`.
pub fn construct_any(spec: &BackwardSpec, pair: &FluxPair, n: usize) -> Result<BackwardPlan> {
    if spec.r < 0.0 {
        construct_minus(spec, pair, n)
    } else {
        construct(spec, pair, n)
    }
}

/// Profile at `T` generated by the continuous data, in physical coordinates.
pub fn ideal_profile(spec: &BackwardSpec, pair: &FluxPair, x: f64) -> Result<f64> {
    if spec.r < 0.0 {
        return ideal_plus(&spec.mirrored(), &pair.mirrored(), -x).map(|u| -u);
    }
    ideal_plus(spec, pair, x)
}

fn ideal_plus(spec: &BackwardSpec, pair: &FluxPair, x: f64) -> Result<f64> {
    let t = spec.t_final;
    if x < 0.0 {
        let cap = if spec.r > 0.0 { spec.rho.eval(0.0) } else { 0.0 };
        Ok(pair.g.deriv_inv((x - spec.y.eval(x).min(cap)) / t))
    } else if x > spec.r || spec.r == 0.0 {
        Ok(pair.f.deriv_inv((x - spec.y.eval(x)) / t))
    } else if x == 0.0 {
        ideal_plus(spec, pair, 1e-12 * spec.r)
    } else {
        let tau = solve_tmap(pair, x, spec.rho.eval(x).min(0.0), t)?;
        Ok(pair.f.deriv_inv(x / (t - tau)))
    }
}

/// Midpoint `L¹` distance on `[0, R]` between the forward solution of `plan.u0` and the ideal profile.
pub fn round_trip_l1(spec: &BackwardSpec, pair: &FluxPair, plan: &BackwardPlan, nq: usize) -> Result<f64> {
    let (a, b) = if spec.r < 0.0 { (spec.r, 0.0) } else { (0.0, spec.r) };
    if b <= a {
        return Ok(0.0);
    }
    let solver = ForwardSolver::new(&plan.u0, pair, spec.t_final, ForwardParams::default())?;
    let h = (b - a) / nq as f64;
    let errs: Vec<f64> = (0..nq)
        .into_par_iter()
        .map(|i| {
            let x = a + (i as f64 + 0.5) * h;
            ideal_profile(spec, pair, x).map(|w| (solver.state(x, spec.t_final) - w).abs() * h)
        })
        .collect::<Result<_>>()?;
    Ok(errs.iter().sum())
}

/// A refined plan with its `(N, L¹ error)` history.
#[derive(Clone, Debug)]
pub struct Refined {
    pub plan: BackwardPlan,
    pub n: usize,
    pub history: Vec<(usize, f64)>,
}

/// Double `N` until the round-trip `L¹` error on `[0, R]` drops to `target_l1`.
pub fn refine(spec: &BackwardSpec, pair: &FluxPair, target_l1: f64) -> Result<Refined> {
    refine_with(spec, pair, target_l1, N_MAX, 512)
}

pub fn refine_with(spec: &BackwardSpec, pair: &FluxPair, target_l1: f64, n_max: usize, nq: usize) -> Result<Refined> {
    if !(target_l1 >= 0.0) {
        return Err(Error::Input(format!("target L1 must be nonnegative, got {target_l1}")));
    }
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut n = 1;
    while n <= n_max {
        let plan = construct_any(spec, pair, n)?;
        let err = round_trip_l1(spec, pair, &plan, nq)?;
        history.push((n, err));
        if err <= target_l1 {
            return Ok(Refined { plan, n, history });
        }
        if err < 0.95 * best {
            best = err;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= 3 {
                return Err(Error::Convergence(format!("L1 error stalled at {best:.3e} (target {target_l1:.3e}) by N={n}")));
            }
        }
        n *= 2;
    }
    Err(Error::Convergence(format!("L1 error {best:.3e} above target {target_l1:.3e} at N={n_max}")))
}
