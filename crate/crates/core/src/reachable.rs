//! Reachable profiles at time `T` when the data outside `(B₁, B₂)` is prescribed.
//!
//! Membership recovers `(y, ρ, t)` from a candidate profile and checks the
//! structural constraints. The controller glues the backward construction to
//! two buffer states whose shocks shield it from the prescribed data.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::backward::{self, BackwardSpec, Rho};
use crate::error::{Error, Result};
use crate::flux::{Branch, ConvexFlux, FluxPair};
use crate::godunov::{FvState, GodunovParams, Profile};
use crate::hj_forward::{solve_profile, ForwardParams, GridSpec, SolutionField};
use crate::monofn::MonoFn;
use crate::roots;
use crate::stepfn::StepFn;

/// Tolerance of every membership constraint.
pub const TOL: f64 = 1e-8;
/// Uniform `R` candidates scanned when `R` is not supplied.
pub const R_GRID: usize = 64;
/// Buffer shock speed over the free-region boundary speed.
pub const MARGIN: f64 = 1.1;
/// Membership grid used by [`exact_control`].
pub const CONTROL_GRID: usize = 512;
/// Sample points of the final profile in [`exact_control`].
pub const SAMPLE_NX: usize = 2001;

/// Geometry and prescribed data of the exact control problem.
#[derive(Clone, Debug)]
pub struct ReachSpec {
    pub t_final: f64,
    pub c1: f64,
    pub c2: f64,
    pub b1: f64,
    pub b2: f64,
    pub delta: f64,
    /// Interface extent of the target, when known.
    pub r: Option<f64>,
    /// Prescribed initial data; only its values outside `(B₁, B₂)` matter.
    pub exterior: StepFn,
}

impl ReachSpec {
    pub fn validate(&self) -> Result<()> {
        let s = self;
        let finite = [s.t_final, s.c1, s.c2, s.b1, s.b2, s.delta].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Input("reach parameters must be finite".into()));
        }
        if !(s.t_final > 0.0) {
            return Err(Error::Input(format!("T must be positive, got {}", s.t_final)));
        }
        if !(s.c1 < 0.0 && 0.0 < s.c2) {
            return Err(Error::Input(format!("need C1 < 0 < C2, got ({}, {})", s.c1, s.c2)));
        }
        if !(s.b1 < 0.0 && 0.0 < s.b2) {
            return Err(Error::Input(format!("need B1 < 0 < B2, got ({}, {})", s.b1, s.b2)));
        }
        if !(s.delta > 0.0 && s.b1 + s.delta < 0.0 && s.b2 - s.delta > 0.0) {
            return Err(Error::Input(format!("need delta > 0 with B1+delta < 0 < B2-delta, got {}", s.delta)));
        }
        if let Some(r) = s.r {
            if !(r > s.c1 && r < s.c2) {
                return Err(Error::Input(format!("R = {r} outside (C1, C2)")));
            }
        }
        Ok(())
    }

    fn mirrored(&self) -> ReachSpec {
        ReachSpec {
            t_final: self.t_final,
            c1: -self.c2,
            c2: -self.c1,
            b1: -self.b2,
            b2: -self.b1,
            delta: self.delta,
            r: self.r.map(|r| -r),
            exterior: self.exterior.mirrored(),
        }
    }
}

/// A candidate profile `W` on `[C₁, C₂]`, optionally tagged with its side.
#[derive(Clone)]
pub struct ReachTarget {
    w: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub side: Option<Branch>,
}

impl ReachTarget {
    pub fn new(w: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ReachTarget { w: Arc::new(w), side: None }
    }

    pub fn from_step(s: StepFn) -> Self {
        Self::new(move |x| s.eval(x))
    }

    pub fn with_side(mut self, side: Branch) -> Self {
        self.side = Some(side);
        self
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.w)(x)
    }

    fn mirrored(&self) -> ReachTarget {
        let w = self.w.clone();
        ReachTarget {
            w: Arc::new(move |x| -w(-x)),
            side: self.side.map(|s| match s {
                Branch::Plus => Branch::Minus,
                Branch::Minus => Branch::Plus,
            }),
        }
    }
}

impl fmt::Debug for ReachTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReachTarget").field("side", &self.side).finish_non_exhaustive()
    }
}

/// Constraint families, named for the plus side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    Invertibility,
    SignXY,
    YRange,
    TRange,
    RhoRange,
    YMonotone,
    RhoMonotone,
    YAboveRho0,
}

impl ViolationKind {
    // later stages mean the candidate got further through the checks
    fn stage(self) -> u8 {
        match self {
            ViolationKind::Invertibility => 0,
            ViolationKind::SignXY | ViolationKind::YRange | ViolationKind::TRange | ViolationKind::RhoRange => 1,
            ViolationKind::YMonotone | ViolationKind::RhoMonotone => 2,
            ViolationKind::YAboveRho0 => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::Invertibility => "W outside invertibility range",
            ViolationKind::SignXY => "x*y(x) < 0",
            ViolationKind::YRange => "y outside [B1+delta, B2-delta]",
            ViolationKind::TRange => "t outside [0, T]",
            ViolationKind::RhoRange => "rho outside its range",
            ViolationKind::YMonotone => "y not nondecreasing",
            ViolationKind::RhoMonotone => "rho not nondecreasing",
            ViolationKind::YAboveRho0 => "y above rho(0)",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// First failed constraint of the most promising candidate, in physical coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub side: Branch,
    pub r: f64,
    pub x: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at x = {} (side {:?}, R = {})", self.kind, self.x, self.side, self.r)
    }
}

/// Recovered data at the sample points, in physical coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub side: Branch,
    pub r: f64,
    /// `y` on the two exterior regions, left to right.
    pub y: Vec<(f64, f64)>,
    pub rho: Vec<(f64, f64)>,
    pub t: Vec<(f64, f64)>,
}

impl Witness {
    fn flipped(self) -> Witness {
        let flip = |v: Vec<(f64, f64)>, neg: bool| -> Vec<(f64, f64)> {
            v.into_iter().rev().map(|(x, y)| (-x, if neg { -y } else { y })).collect()
        };
        Witness {
            side: match self.side {
                Branch::Plus => Branch::Minus,
                Branch::Minus => Branch::Plus,
            },
            r: -self.r,
            y: flip(self.y, true),
            rho: flip(self.rho, true),
            t: flip(self.t, false),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Membership {
    pub member: bool,
    pub witness: Option<Witness>,
    pub violation: Option<Violation>,
}

// plus-side view of a problem; the minus side is the reflected problem
struct Frame {
    side: Branch,
    target: ReachTarget,
    spec: ReachSpec,
    pair: FluxPair,
}

impl Frame {
    fn new(target: &ReachTarget, spec: &ReachSpec, pair: &FluxPair, side: Branch) -> Frame {
        match side {
            Branch::Plus => Frame { side, target: target.clone(), spec: spec.clone(), pair: pair.clone() },
            Branch::Minus => Frame { side, target: target.mirrored(), spec: spec.mirrored(), pair: pair.mirrored() },
        }
    }

    fn eps(&self) -> f64 {
        1e-9 * (self.spec.c2 - self.spec.c1)
    }

    // sample points of [C1, 0), (0, R) and (R, C2], each pulled just off the region ends
    fn points(&self, r: f64, grid: usize) -> [Vec<f64>; 3] {
        let (c1, c2) = (self.spec.c1, self.spec.c2);
        let eps = self.eps();
        let h = (c2 - c1) / grid as f64;
        let nodes: Vec<f64> = (0..=grid).map(|i| if i == grid { c2 } else { c1 + i as f64 * h }).collect();
        let mut left: Vec<f64> = nodes.iter().copied().filter(|&x| x < -eps).collect();
        left.push(-eps);
        let mut mid = Vec::new();
        if r > 2.0 * eps {
            mid.push(eps);
            mid.extend(nodes.iter().copied().filter(|&x| x > eps && x < r - eps));
            mid.push(r - eps);
        }
        let start = r.max(0.0) + eps;
        let mut right = vec![start];
        right.extend(nodes.iter().copied().filter(|&x| x > start));
        [left, mid, right]
    }

    // x - T f'(W(x)): the right-exterior foot, negative inside the interface region
    fn right_foot(&self, x: f64) -> f64 {
        x - self.spec.t_final * self.pair.f.deriv(self.target.eval(x))
    }

    fn r_candidates(&self, grid: usize) -> Vec<f64> {
        if let Some(r) = self.spec.r {
            return vec![r];
        }
        let c2 = self.spec.c2;
        let mut rs = vec![0.0];
        rs.extend((1..R_GRID).map(|k| c2 * k as f64 / R_GRID as f64));
        rs.extend(self.crossings(grid));
        rs.sort_by(f64::total_cmp);
        rs.dedup();
        rs
    }

    // where the right foot turns nonnegative between grid nodes, refined by bisection
    fn crossings(&self, grid: usize) -> Vec<f64> {
        let nonneg = |x: f64| self.right_foot(x) >= -0.1 * TOL;
        let c2 = self.spec.c2;
        let h = (c2 - self.spec.c1) / grid as f64;
        let eps = self.eps();
        let mut xs = vec![eps];
        let mut x = self.spec.c1 + h;
        while x < c2 {
            if x > eps {
                xs.push(x);
            }
            x += h;
        }
        xs.push(c2);
        let mut out = Vec::new();
        for w in xs.windows(2) {
            if !nonneg(w[0]) && nonneg(w[1]) {
                let (mut lo, mut hi) = (w[0], w[1]);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if mid == lo || mid == hi {
                        break;
                    }
                    if nonneg(mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                if hi < c2 - 2.0 * eps {
                    out.push(hi);
                }
            }
        }
        out
    }

    // recover (y, rho, t) for one R and check every constraint; frame coordinates
    fn check(&self, r: f64, grid: usize) -> std::result::Result<Witness, (ViolationKind, f64)> {
        use ViolationKind::*;
        let s = &self.spec;
        let t = s.t_final;
        let (f, g) = (&self.pair.f, &self.pair.g);
        let [left, mid, right] = self.points(r, grid);
        let slope = |h: &ConvexFlux, x: f64| -> std::result::Result<f64, (ViolationKind, f64)> {
            let p = h.deriv(self.target.eval(x));
            if p.is_finite() {
                Ok(p)
            } else {
                Err((Invertibility, x))
            }
        };
        let yl: Vec<(f64, f64)> = left.iter().map(|&x| slope(g, x).map(|p| (x, x - t * p))).collect::<std::result::Result<_, _>>()?;
        let pm: Vec<(f64, f64)> = mid.iter().map(|&x| slope(f, x).map(|p| (x, p))).collect::<std::result::Result<_, _>>()?;
        let yr: Vec<(f64, f64)> = right.iter().map(|&x| slope(f, x).map(|p| (x, x - t * p))).collect::<std::result::Result<_, _>>()?;

        let (ylo, yhi) = (s.b1 + s.delta, s.b2 - s.delta);
        for &(x, y) in &yl {
            if y > TOL {
                return Err((SignXY, x));
            }
            if y < ylo - TOL || y > yhi + TOL {
                return Err((YRange, x));
            }
        }
        let mut tm = Vec::with_capacity(pm.len());
        let mut rho = Vec::with_capacity(pm.len());
        for &(x, p) in &pm {
            if !(p > 0.0) {
                return Err((TRange, x));
            }
            let tx = t - x / p;
            if tx < -TOL || tx > t + TOL {
                return Err((TRange, x));
            }
            // p already equals x/(T - t) unless t was clamped; avoid the cancellation in T - t
            let q = if (0.0..=t).contains(&tx) { p } else { x / (t - tx.clamp(0.0, t)) };
            let tx = tx.clamp(0.0, t);
            let h = self.pair.h_plus(q).map_err(|_| (Invertibility, x))?;
            let rx = -tx * h;
            if rx < s.b1 - s.delta - TOL || rx > TOL {
                return Err((RhoRange, x));
            }
            tm.push((x, tx));
            rho.push((x, rx));
        }
        for &(x, y) in &yr {
            if y < -TOL {
                return Err((SignXY, x));
            }
            if y < ylo - TOL || y > yhi + TOL {
                return Err((YRange, x));
            }
        }

        let ys: Vec<(f64, f64)> = yl.iter().chain(&yr).copied().collect();
        if let Some(w) = ys.windows(2).find(|w| w[1].1 < w[0].1 - TOL) {
            return Err((YMonotone, w[1].0));
        }
        if let Some(w) = rho.windows(2).find(|w| w[1].1 < w[0].1 - TOL) {
            return Err((RhoMonotone, w[1].0));
        }

        let rho0 = rho.first().map_or(0.0, |p| p.1);
        if let Some(&(x, _)) = yl.iter().find(|p| p.1 > rho0 + TOL) {
            return Err((YAboveRho0, x));
        }
        Ok(Witness { side: Branch::Plus, r, y: ys, rho, t: tm })
    }
}

/// Decide whether `W` is reachable, scanning sides and `R` candidates.
///
/// With `spec.r` set only that `R` is tried; otherwise `R = 0`, a uniform
/// grid on each side and the sign changes of the recovered exterior foot.
/// The first feasible candidate (plus side first, increasing `|R|`) wins.
pub fn membership(target: &ReachTarget, spec: &ReachSpec, pair: &FluxPair, grid: usize) -> Result<Membership> {
    spec.validate()?;
    if grid < 2 {
        return Err(Error::Input(format!("membership grid must have at least 2 cells, got {grid}")));
    }
    let sides: Vec<Branch> = match spec.r {
        Some(r) if r < 0.0 => vec![Branch::Minus],
        Some(_) => vec![Branch::Plus],
        None => vec![Branch::Plus, Branch::Minus],
    };
    let sides: Vec<Branch> = sides.into_iter().filter(|s| target.side.is_none_or(|t| t == *s)).collect();
    if sides.is_empty() {
        return Err(Error::Input("target side contradicts the sign of R".into()));
    }
    let frames: Vec<Frame> = sides.iter().map(|&s| Frame::new(target, spec, pair, s)).collect();
    let jobs: Vec<(usize, f64)> = frames.iter().enumerate().flat_map(|(i, fr)| fr.r_candidates(grid).into_iter().map(move |r| (i, r))).collect();
    let results: Vec<_> = jobs.par_iter().map(|&(i, r)| frames[i].check(r, grid)).collect();

    let physical = |i: usize, x: f64| if frames[i].side == Branch::Minus { -x } else { x };
    let mut best: Option<Violation> = None;
    for (&(i, r), res) in jobs.iter().zip(results) {
        match res {
            Ok(w) => {
                let w = if frames[i].side == Branch::Minus { w.flipped() } else { w };
                return Ok(Membership { member: true, witness: Some(w), violation: None });
            }
            Err((kind, x)) => {
                if best.as_ref().is_none_or(|b| kind.stage() > b.kind.stage()) {
                    best = Some(Violation { kind, side: frames[i].side, r: physical(i, r), x: physical(i, x) });
                }
            }
        }
    }
    Ok(Membership { member: false, witness: None, violation: best })
}

/// Which side of the interface a buffer sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BufferSide {
    Left,
    Right,
}

/// Buffer state whose shock against exterior states beyond `m` moves out faster
/// than the line from `(B, 0)` to `(P, T)`, with the speed margin [`MARGIN`].
///
/// On the right `m` is the lowest exterior state and `λ > m`; on the left `m`
/// is the highest exterior state and `λ ≤ m - 1`.
pub fn free_region_lambda(flux: &ConvexFlux, m: f64, b: f64, p: f64, t_final: f64, side: BufferSide) -> Result<f64> {
    if !(t_final > 0.0) || !m.is_finite() || !b.is_finite() || !p.is_finite() {
        return Err(Error::Input("free region needs finite data and T > 0".into()));
    }
    let ok = match side {
        BufferSide::Right => 0.0 < b && b < p,
        BufferSide::Left => p < b && b < 0.0,
    };
    if !ok {
        return Err(Error::Input(format!("free region needs 0 < B < P (or P < B < 0), got B = {b}, P = {p}")));
    }
    let speed = MARGIN * (p - b) / t_final;
    let lam = roots::solve_increasing(|l| flux.chord(l, m) - speed, m, m + 1.0, roots::ROOT_TOL * (1.0 + m.abs()))
        .ok_or_else(|| Error::Solve(format!("no buffer state reaches speed {speed}")))?;
    Ok(match side {
        BufferSide::Right if lam <= m => m + 1.0,
        BufferSide::Right => lam,
        BufferSide::Left => lam.min(m - 1.0),
    })
}

/// Buffer states and the free-region lines they clear.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeRegion {
    pub p1: f64,
    pub p2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl FreeRegion {
    /// `[q₁(t), q₂(t)]`, the free region at time `t`.
    pub fn span(&self, spec: &ReachSpec, t: f64) -> (f64, f64) {
        let s = t / spec.t_final;
        (spec.b1 + (self.p1 - spec.b1) * s, spec.b2 + (self.p2 - spec.b2) * s)
    }
}

/// Buffers for `spec`, with `P₁ = min(C₁, B₁) - δ` and `P₂ = max(C₂, B₂) + δ`.
pub fn free_region(spec: &ReachSpec, pair: &FluxPair) -> Result<FreeRegion> {
    let ext = &spec.exterior;
    let m1 = ext.pieces_in(f64::NEG_INFINITY, spec.b1).iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max);
    let m2 = ext.pieces_in(spec.b2, f64::INFINITY).iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
    let p1 = spec.c1.min(spec.b1) - spec.delta;
    let p2 = spec.c2.max(spec.b2) + spec.delta;
    Ok(FreeRegion {
        p1,
        p2,
        lambda1: free_region_lambda(&pair.g, m1, spec.b1, p1, spec.t_final, BufferSide::Left)?,
        lambda2: free_region_lambda(&pair.f, m2, spec.b2, p2, spec.t_final, BufferSide::Right)?,
    })
}

/// Output of [`exact_control`].
#[derive(Clone, Debug)]
pub struct ExactControl {
    pub u0: StepFn,
    /// Backward-constructed data, used on `[B₁+δ, B₂-δ]`.
    pub interior: StepFn,
    pub free: FreeRegion,
    pub witness: Witness,
    pub sol: SolutionField,
    /// `L¹(C₁, C₂)` distance between `u(·, T)` and `W`.
    pub l1_error: f64,
}

fn interior_data(target: &ReachTarget, spec: &ReachSpec, pair: &FluxPair, wit: &Witness, n: usize) -> Result<StepFn> {
    let fr = Frame::new(target, spec, pair, wit.side);
    let w = if wit.side == Branch::Minus { wit.clone().flipped() } else { wit.clone() };
    let t = spec.t_final;
    let r = w.r;
    let eps = fr.eps();
    let rho = if r > 2.0 * eps {
        let (tg, pr) = (fr.target.clone(), fr.pair.clone());
        Rho::func(move |x| {
            let x = x.clamp(eps, r - eps);
            let p = pr.f.deriv(tg.eval(x));
            let tx = t - x / p;
            let q = if (0.0..=t).contains(&tx) { p } else { x / (t - tx.clamp(0.0, t)) };
            -tx.clamp(0.0, t) * pr.h_plus(q).unwrap_or(f64::NAN)
        })
    } else {
        Rho::Step(StepFn::constant(0.0))
    };
    let mut pts = w.y.clone();
    for k in 1..pts.len() {
        pts[k].1 = pts[k].1.max(pts[k - 1].1);
    }
    let bspec = BackwardSpec { t_final: t, r: if r > 2.0 * eps { r } else { 0.0 }, rho, y: MonoFn::from_points(&pts)? };
    let plan = backward::construct(&bspec, &fr.pair, n)?;
    Ok(if wit.side == Branch::Minus { plan.u0.mirrored() } else { plan.u0 })
}

// prescribed data outside (B1, B2), buffers next to it, interior data in between
fn glue(spec: &ReachSpec, free: &FreeRegion, interior: &StepFn, exterior: &StepFn) -> Result<StepFn> {
    let (b1, b2, d) = (spec.b1, spec.b2, spec.delta);
    let outer = exterior.eval(f64::MIN);
    let mut pieces: Vec<(f64, f64)> = exterior.pieces_in(f64::NEG_INFINITY, b1).iter().skip(1).map(|p| (p.0, p.2)).collect();
    pieces.push((b1, free.lambda1));
    pieces.extend(interior.pieces_in(b1 + d, b2 - d).iter().map(|p| (p.0, p.2)));
    pieces.push((b2 - d, free.lambda2));
    pieces.extend(exterior.pieces_in(b2, f64::INFINITY).iter().map(|p| (p.0, p.2)));
    StepFn::from_pieces(outer, &pieces)
}

/// Initial data that reaches `W` on `(C₁, C₂)` at time `T` and equals the
/// prescribed data outside `(B₁, B₂)`, with `N` backward levels.
pub fn exact_control(target: &ReachTarget, spec: &ReachSpec, pair: &FluxPair, n: usize) -> Result<ExactControl> {
    let m = membership(target, spec, pair, CONTROL_GRID)?;
    let witness = match m.witness {
        Some(w) => w,
        None => {
            let why = m.violation.map_or_else(|| "no candidate".to_string(), |v| v.to_string());
            return Err(Error::Input(format!("target is not reachable: {why}")));
        }
    };
    let interior = interior_data(target, spec, pair, &witness, n)?;
    let free = free_region(spec, pair)?;
    let u0 = glue(spec, &free, &interior, &spec.exterior)?;
    let grid = GridSpec { x_min: spec.c1, x_max: spec.c2, nx: SAMPLE_NX, nt: 16 };
    let sol = solve_profile(&u0, pair, spec.t_final, &grid, ForwardParams::default())?;
    let l1_error = sol.l1_against(spec.c1, spec.c2, |x| target.eval(x));
    Ok(ExactControl { u0, interior, free, witness, sol, l1_error })
}

/// Largest Godunov cell difference inside the free region between the controlled
/// run and the run with the prescribed data replaced by the buffer states.
///
/// Cells within `2 dx` of the free-region lines are skipped.
pub fn isolation_gap(ctrl: &ExactControl, spec: &ReachSpec, pair: &FluxPair, dx: f64, snapshots: usize) -> Result<f64> {
    if snapshots == 0 {
        return Err(Error::Input("need at least one snapshot".into()));
    }
    let fr = &ctrl.free;
    let pure = glue(spec, fr, &ctrl.interior, &StepFn::riemann(0.0, fr.lambda1, fr.lambda2))?;
    let times: Vec<f64> = (1..=snapshots).map(|k| spec.t_final * k as f64 / snapshots as f64).collect();
    let gp = GodunovParams::new(dx, 0.9, (fr.p1, fr.p2));
    // both runs take the same time steps, so differences come from the data alone
    let (lo, hi) = [&ctrl.u0, &pure, &StepFn::riemann(0.0, pair.g.theta(), pair.f.theta())]
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), s| (l.min(s.min_value()), h.max(s.max_value())));
    let dt = gp.cfl * dx / pair.f.max_speed(lo, hi).max(pair.g.max_speed(lo, hi));
    let run = |u0: &StepFn| -> Result<Vec<Profile>> {
        let mut st = FvState::new(u0, pair, spec.t_final, &gp)?;
        st.dt_max = dt;
        times.iter().map(|&t| st.advance_to(t).map(|_| st.profile())).collect()
    };
    let (a, b) = rayon::join(|| run(&ctrl.u0), || run(&pure));
    let (a, b) = (a?, b?);
    let mut gap: f64 = 0.0;
    for (pa, pb) in a.iter().zip(&b) {
        let (lo, hi) = fr.span(spec, pa.t);
        for (i, &u) in pa.u.iter().enumerate() {
            let x = pa.center(i);
            if x > lo + 2.0 * dx && x < hi - 2.0 * dx {
                gap = gap.max((u - pb.eval(x)).abs());
            }
        }
    }
    Ok(gap)
}
