//! Optimal control: the costs `J` and `J̃`, a-priori bounds, and a minimizer of `J̃`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backward::{self, BackwardSpec, Rho};
use crate::error::{Error, Result};
use crate::flux::{Branch, FluxPair};
use crate::hj_forward::SolutionField;
use crate::isotonic::isotonic_bounded;
use crate::monofn::{Knot, MonoFn};
use crate::quad::{cut, simpson, simpson_pieces};
use crate::roots;
use crate::stepfn::StepFn;

/// Composite Simpson nodes per quadrature interval.
pub const N_QUAD: usize = 64;

/// Target profile `k` with `η[k]` supported in `[-C, C]`.
#[derive(Clone)]
pub struct TargetSpec {
    k: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub c: f64,
    /// Discontinuities of `k`, used to split quadrature intervals.
    pub breaks: Vec<f64>,
}

impl std::fmt::Debug for TargetSpec {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("TargetSpec").field("c", &self.c).field("breaks", &self.breaks).finish()
    }
}

impl TargetSpec {
    pub fn new(k: impl Fn(f64) -> f64 + Send + Sync + 'static, c: f64, breaks: Vec<f64>) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Input(format!("support radius must be positive, got {c}")));
        }
        Ok(TargetSpec { k: Arc::new(k), c, breaks })
    }

    pub fn from_step(k: StepFn, c: f64) -> Result<Self> {
        let breaks = k.breaks().to_vec();
        Self::new(move |x| k.eval(x), c, breaks)
    }

    pub fn k(&self, x: f64) -> f64 {
        (self.k)(x)
    }

    /// `g'(k(x))` for `x ≤ 0`, `f'(k(x))` for `x > 0`.
    pub fn eta(&self, pair: &FluxPair, x: f64) -> f64 {
        if x <= 0.0 {
            pair.g.deriv(self.k(x))
        } else {
            pair.f.deriv(self.k(x))
        }
    }

    /// Checks that `η[k]` vanishes on sampled points beyond `±C`.
    pub fn check_support(&self, pair: &FluxPair) -> Result<()> {
        for i in 1..=64 {
            let x = self.c * (1.0 + 2.0 * i as f64 / 64.0);
            for s in [x, -x] {
                let e = self.eta(pair, s);
                if e.abs() > 1e-9 {
                    return Err(Error::Input(format!("eta[k]({s}) = {e} outside the support [-C, C]")));
                }
            }
        }
        Ok(())
    }

    /// `‖η[k]‖²` over `[-C, C]`.
    pub fn eta_norm2(&self, pair: &FluxPair) -> f64 {
        let mut br = self.breaks.clone();
        br.push(0.0);
        simpson_pieces(|x| self.eta(pair, x).powi(2), &br, -self.c, self.c, N_QUAD)
    }

    /// The target whose `η[k]` equals the integrands of `J̃(triple)`, so that the triple costs zero.
    pub fn generated_by(triple: &AdmissibleTriple, pair: &FluxPair, t_final: f64) -> Result<Self> {
        if triple.r < 0.0 {
            return Ok(Self::generated_by(&triple.mirrored(), &pair.mirrored(), t_final)?.mirrored());
        }
        triple.validate()?;
        let knots = triple.y.knots();
        let mut c = triple.r.max(1e-9);
        if let (Some(a), Some(b)) = (knots.first(), knots.last()) {
            c = c.max(-a.x).max(b.x);
        }
        let (tr, p) = (triple.clone(), pair.clone());
        let mut breaks: Vec<f64> = knots.iter().map(|k| k.x).collect();
        breaks.extend_from_slice(triple.rho.breaks());
        breaks.extend_from_slice(&[0.0, triple.r]);
        let k = move |x: f64| {
            if x <= 0.0 {
                p.g.deriv_inv((x - tr.y.eval_left(x)) / t_final)
            } else if x <= tr.r {
                let s = interface_slope(&p, x, tr.rho.eval(x), t_final).unwrap_or(f64::NAN);
                p.f.deriv_inv(s)
            } else {
                p.f.deriv_inv((x - tr.y.eval(x)) / t_final)
            }
        };
        Self::new(k, c, breaks)
    }

    /// `x ↦ -k(-x)`, the target of the reflected problem.
    pub fn mirrored(&self) -> TargetSpec {
        let k = self.k.clone();
        let mut breaks: Vec<f64> = self.breaks.iter().map(|b| -b).collect();
        breaks.reverse();
        TargetSpec { k: Arc::new(move |x| -k(-x)), c: self.c, breaks }
    }
}

/// `(R, ρ, y)`. For `R ≥ 0` this is the A₁ side; for `R < 0` the mirrored A₂ side.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibleTriple {
    pub r: f64,
    pub rho: StepFn,
    pub y: MonoFn,
}

impl AdmissibleTriple {
    /// `(0, ∅, identity)`.
    pub fn trivial() -> Self {
        AdmissibleTriple { r: 0.0, rho: StepFn::constant(0.0), y: MonoFn::identity() }
    }

    pub fn mirrored(&self) -> Self {
        AdmissibleTriple { r: -self.r, rho: self.rho.mirrored(), y: self.y.mirrored() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 0.0 {
            return self.mirrored().validate();
        }
        let tol = 1e-12 * (1.0 + self.rho.sup_abs());
        let vals: Vec<f64> = self.rho.pieces_in(0.0, self.r).iter().map(|p| p.2).collect();
        if vals.iter().any(|&v| v > tol) || vals.windows(2).any(|w| w[1] < w[0] - tol) {
            return Err(Error::Input("rho must be nonpositive and monotone on [0, R]".into()));
        }
        let cap = if self.r > 0.0 { self.rho.eval(0.0).min(0.0) } else { 0.0 };
        if self.y.eval_left(0.0) > cap + tol {
            return Err(Error::Input(format!("y(0-) = {} exceeds {cap}", self.y.eval_left(0.0))));
        }
        if self.y.eval(self.r) < -tol {
            return Err(Error::Input(format!("y(R+) = {} is negative", self.y.eval(self.r))));
        }
        Ok(())
    }

    pub fn to_backward(&self, t_final: f64) -> BackwardSpec {
        BackwardSpec { t_final, r: self.r, rho: Rho::Step(self.rho.clone()), y: self.y.clone() }
    }
}

/// `J` and the number of quadrature samples where a composite map was clamped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JReport {
    pub value: f64,
    pub clamped: usize,
}

/// Cost `J` of a sampled solution, by the trapezoid rule on its grid.
pub fn cost_j(sol: &SolutionField, target: &TargetSpec, pair: &FluxPair) -> JReport {
    let (l1, r1) = (sol.l1_final, sol.r1_final);
    let mut clamped = 0;
    let vals: Vec<f64> = sol
        .x
        .iter()
        .zip(&sol.u)
        .map(|(&x, &u)| {
            let slope = if x <= l1 {
                pair.g.deriv(u)
            } else if x <= 0.0 {
                let c = pair.f_slope_of_g_state(u);
                clamped += c.clamped as usize;
                c.value
            } else if x < r1 {
                let c = pair.g_slope_of_f_state(u);
                clamped += c.clamped as usize;
                c.value
            } else {
                pair.f.deriv(u)
            };
            (slope - target.eta(pair, x)).powi(2)
        })
        .collect();
    let value = sol.x.windows(2).zip(vals.windows(2)).map(|(x, v)| 0.5 * (v[0] + v[1]) * (x[1] - x[0])).sum();
    JReport { value, clamped }
}

// −ρ/t on the interface region, continued by h₊(x/T) where ρ = 0
fn interface_slope(pair: &FluxPair, x: f64, rho: f64, t_final: f64) -> Result<f64> {
    let t = backward::solve_tmap(pair, x, rho.min(0.0), t_final)?;
    if t > 0.0 {
        Ok(-rho / t)
    } else {
        pair.h_plus((x / t_final).max(pair.iplus_lo()))
    }
}

/// `J̃(R, ρ, y)` by composite Simpson on every interval between breakpoints.
pub fn cost_jtilde(triple: &AdmissibleTriple, target: &TargetSpec, pair: &FluxPair, t_final: f64) -> Result<f64> {
    if triple.r < 0.0 {
        return cost_jtilde(&triple.mirrored(), &target.mirrored(), &pair.mirrored(), t_final);
    }
    triple.validate()?;
    let (t, r, c) = (t_final, triple.r, target.c);
    let knots = triple.y.knots();
    let mut a = -c;
    let mut b = c.max(r);
    if let (Some(first), Some(last)) = (knots.first(), knots.last()) {
        let tol = 1e-12;
        if (first.left - first.x).abs() > tol * (1.0 + first.x.abs()) || (last.right - last.x).abs() > tol * (1.0 + last.x.abs()) {
            return Ok(f64::INFINITY);
        }
        a = a.min(first.x);
        b = b.max(last.x);
    }
    let mut br: Vec<f64> = knots.iter().map(|k| k.x).collect();
    br.extend_from_slice(&target.breaks);
    br.extend_from_slice(triple.rho.breaks());
    br.extend_from_slice(&[0.0, r, c, -c]);
    let outer = |x: f64| ((x - triple.y.eval(x)) / t - target.eta(pair, x)).powi(2);
    let left = simpson_pieces(outer, &br, a, 0.0, N_QUAD);
    let right = simpson_pieces(outer, &br, r, b, N_QUAD);
    let mid_pts = cut(&br, 0.0, r);
    let mid: Vec<f64> = mid_pts
        .par_windows(2)
        .map(|w| -> Result<f64> {
            let err = std::sync::Mutex::new(None);
            let v = simpson(
                |x| match interface_slope(pair, x, triple.rho.eval(x), t) {
                    Ok(s) => (s - target.eta(pair, x)).powi(2),
                    Err(e) => {
                        *err.lock().unwrap() = Some(e);
                        0.0
                    }
                },
                w[0],
                w[1],
                N_QUAD,
            );
            match err.into_inner().unwrap() {
                Some(e) => Err(e),
                None => Ok(v),
            }
        })
        .collect::<Result<_>>()?;
    Ok(left + mid.iter().sum::<f64>() + right)
}

/// A-priori bounds on minimizing triples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bounds {
    pub r0: f64,
    pub rho0: f64,
    pub m1: f64,
    pub eta_norm2: f64,
}

pub fn bounds(target: &TargetSpec, pair: &FluxPair, t_final: f64) -> Bounds {
    let n2 = target.eta_norm2(pair);
    bounds_from_norm(n2, target.c, pair, t_final)
}

fn bounds_from_norm(n2: f64, c: f64, pair: &FluxPair, t: f64) -> Bounds {
    let rho0 = (18.0 * t * t * n2).cbrt();
    let lo = pair.iplus_lo();
    let hp = |x: f64| pair.h_plus((x / t).max(lo)).unwrap_or(0.0).powi(2);
    let grow = |r: f64| simpson(hp, c, r, 256) - 2.0 * n2;
    let r0 = if n2 <= 0.0 {
        c
    } else {
        let mut hi = c + 1.0;
        while grow(hi) <= 0.0 {
            hi = c + 2.0 * (hi - c);
        }
        roots::bisect(grow, c, hi, 1e-13 * (1.0 + hi)).unwrap_or(hi)
    };
    Bounds { r0, rho0, m1: r0 + (6.0 * t * t * n2).cbrt(), eta_norm2: n2 }
}

/// Grid sizes for [`minimize`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscSpec {
    /// R-candidates on `[0, R₀]` (plus golden refinement).
    #[serde(rename = "n_R")]
    pub n_r: usize,
    /// Cells for `ρ` on `[0, R]`.
    pub n_levels: usize,
    /// Cells for `y` on each exterior side.
    #[serde(default = "default_n_ext")]
    pub n_ext: usize,
}

fn default_n_ext() -> usize {
    512
}

impl Default for DiscSpec {
    fn default() -> Self {
        DiscSpec { n_r: 16, n_levels: 32, n_ext: 512 }
    }
}

/// Result of [`minimize`].
#[derive(Clone, Debug)]
pub struct Optimum {
    pub triple: AdmissibleTriple,
    pub side: Branch,
    pub jtilde: f64,
    pub bounds: Bounds,
    pub u0: StepFn,
}

// cell data for the monotone chain: (target, weight, lo, hi)
type Cell = (f64, f64, f64, f64);

fn rho_star(pair: &FluxPair, x: f64, eta: f64, t: f64, rho0: f64) -> f64 {
    let floor = pair.h_plus((x / t).max(pair.iplus_lo())).unwrap_or(0.0);
    if eta <= floor {
        return 0.0;
    }
    match pair.h_plus_inv(eta) {
        Ok(p) if p > x / t => (-eta * (t - x / p)).max(-rho0),
        _ => 0.0,
    }
}

fn edges(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
}

fn candidate(target: &TargetSpec, pair: &FluxPair, t: f64, disc: &DiscSpec, bd: &Bounds, r: f64) -> Result<(AdmissibleTriple, f64)> {
    let m1 = bd.m1.max(r);
    let le = edges(-m1, 0.0, disc.n_ext.max(1));
    let me = if r > 0.0 { edges(0.0, r, disc.n_levels.max(1)) } else { vec![] };
    let re = if m1 > r { edges(r, m1, disc.n_ext.max(1)) } else { vec![] };
    let mut br = target.breaks.clone();
    br.push(0.0);
    let ystar = |x: f64| x - t * target.eta(pair, x);
    let ext_cell = |w: &[f64], lo: f64, hi: f64| -> Cell {
        let len = w[1] - w[0];
        (simpson_pieces(ystar, &br, w[0], w[1], 8) / len, len / (t * t), lo, hi)
    };
    let mut cells: Vec<Cell> = le.windows(2).map(|w| ext_cell(w, -m1, 0.0)).collect();
    let mid: Vec<Cell> = me
        .par_windows(2)
        .map(|w| {
            let len = w[1] - w[0];
            let z = simpson_pieces(|x| rho_star(pair, x, target.eta(pair, x), t, bd.rho0), &br, w[0], w[1], 8) / len;
            let xm = 0.5 * (w[0] + w[1]);
            let d = 1e-6 * (1.0 + z.abs());
            let z1 = z.min(-d);
            let s = match (interface_slope(pair, xm, z1, t), interface_slope(pair, xm, z1 - d, t)) {
                (Ok(a), Ok(b)) => (a - b) / d,
                _ => 1.0 / t,
            };
            (z, len * s * s, -bd.rho0, 0.0)
        })
        .collect();
    cells.extend(mid);
    cells.extend(re.windows(2).map(|w| ext_cell(w, 0.0, m1)));
    let v: Vec<f64> = cells.iter().map(|c| c.0).collect();
    let w: Vec<f64> = cells.iter().map(|c| c.1).collect();
    let lo: Vec<f64> = cells.iter().map(|c| c.2).collect();
    let hi: Vec<f64> = cells.iter().map(|c| c.3).collect();
    let z = isotonic_bounded(&v, &w, &lo, &hi).map_err(|e| e.context(format!("R = {r}")))?;
    let nl = le.len() - 1;
    let nm = me.len().saturating_sub(1);
    let (zl, rest) = z.split_at(nl);
    let (zm, zr) = rest.split_at(nm);

    let rho = if nm > 0 { StepFn::new(me[1..nm].to_vec(), zm.to_vec())?.simplified() } else { StepFn::constant(0.0) };
    let after = zr.first().copied().unwrap_or(m1);
    let mut knots = vec![Knot { x: -m1, left: -m1, right: zl[0] }];
    for j in 1..nl {
        knots.push(Knot { x: le[j], left: zl[j - 1], right: zl[j] });
    }
    knots.push(Knot { x: 0.0, left: zl[nl - 1], right: after });
    if r > 0.0 {
        knots.push(Knot { x: r, left: after, right: after });
    }
    for j in 1..zr.len() {
        knots.push(Knot { x: re[j], left: zr[j - 1], right: zr[j] });
    }
    if let Some(&last) = zr.last() {
        knots.push(Knot { x: m1, left: last, right: m1 });
    }
    let triple = AdmissibleTriple { r, rho, y: MonoFn::new(knots)? };
    let cost = cost_jtilde(&triple, target, pair, t)?;
    Ok((triple, cost))
}

// best triple on the A₁ side
fn side_best(target: &TargetSpec, pair: &FluxPair, t: f64, disc: &DiscSpec, bd: &Bounds) -> Result<(AdmissibleTriple, f64)> {
    let n = disc.n_r.max(1);
    let rs: Vec<f64> = (0..=n).map(|j| bd.r0 * j as f64 / n as f64).collect();
    let evals: Vec<(AdmissibleTriple, f64)> = rs.par_iter().map(|&r| candidate(target, pair, t, disc, bd, r)).collect::<Result<_>>()?;
    let mut best = (AdmissibleTriple::trivial(), cost_jtilde(&AdmissibleTriple::trivial(), target, pair, t)?);
    let mut jbest = None;
    for (j, e) in evals.iter().enumerate() {
        if e.1 < best.1 {
            best = e.clone();
            jbest = Some(j);
        }
    }
    if let Some(j) = jbest {
        let a = rs[j.saturating_sub(1)];
        let b = rs[(j + 1).min(n)];
        if b > a {
            let f = |r: f64| candidate(target, pair, t, disc, bd, r).map(|c| c.1).unwrap_or(f64::INFINITY);
            let (r, _) = roots::golden(f, a, b, 1e-6 * (1.0 + b));
            let c = candidate(target, pair, t, disc, bd, r)?;
            if c.1 < best.1 {
                best = c;
            }
        }
    }
    // J̃ jumps where η[k] does, and a minimizer can sit right at the jump
    let jumps = jump_candidates(target, pair, bd.r0, n);
    let evals: Vec<(AdmissibleTriple, f64)> = jumps.par_iter().map(|&r| candidate(target, pair, t, disc, bd, r)).collect::<Result<_>>()?;
    for e in evals {
        if e.1 < best.1 {
            best = e;
        }
    }
    Ok(best)
}

// up to `n` breaks of k in (0, r0], largest |η| jumps first
fn jump_candidates(target: &TargetSpec, pair: &FluxPair, r0: f64, n: usize) -> Vec<f64> {
    let mut js: Vec<(f64, f64)> = target
        .breaks
        .iter()
        .filter(|&&b| b > 0.0 && b <= r0)
        .map(|&b| {
            let h = 1e-9 * (1.0 + b);
            ((target.eta(pair, b + h) - target.eta(pair, b - h)).abs(), b)
        })
        .filter(|j| j.0 > 1e-6)
        .collect();
    js.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)));
    js.truncate(n);
    let mut rs: Vec<f64> = js.into_iter().map(|j| j.1).collect();
    rs.sort_by(f64::total_cmp);
    rs.dedup();
    rs
}

/// Minimize `J̃` over both sides and build initial data for the winner.
pub fn minimize(target: &TargetSpec, pair: &FluxPair, t_final: f64, disc: &DiscSpec) -> Result<Optimum> {
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::Input(format!("T must be positive, got {t_final}")));
    }
    target.check_support(pair)?;
    let bd = bounds(target, pair, t_final);
    let (mt, mp) = (target.mirrored(), pair.mirrored());
    let bd_m = bounds_from_norm(bd.eta_norm2, target.c, &mp, t_final);
    let (plus, minus) = rayon::join(|| side_best(target, pair, t_final, disc, &bd), || side_best(&mt, &mp, t_final, disc, &bd_m));
    let (p, m) = (plus?, minus?);
    let (triple, jtilde, side, bounds) = if m.1 < p.1 && m.0.r > 0.0 {
        (m.0.mirrored(), m.1, Branch::Minus, bd_m)
    } else {
        (p.0, p.1, Branch::Plus, bd)
    };
    let plan = backward::construct_any(&triple.to_backward(t_final), pair, disc.n_levels.max(1))
        .map_err(|e| e.context("building initial data for the minimizer"))?;
    Ok(Optimum { triple, side, jtilde, bounds, u0: plan.u0 })
}

/// [`minimize`] with grids doubled until `J̃*` changes by less than `tol`.
pub fn minimize_refined(target: &TargetSpec, pair: &FluxPair, t_final: f64, disc: &DiscSpec, tol: f64, max_doublings: usize) -> Result<(Optimum, Vec<f64>)> {
    let mut d = *disc;
    let mut opt = minimize(target, pair, t_final, &d)?;
    let mut history = vec![opt.jtilde];
    for _ in 0..max_doublings {
        d = DiscSpec { n_r: 2 * d.n_r, n_levels: 2 * d.n_levels, n_ext: 2 * d.n_ext };
        let next = minimize(target, pair, t_final, &d)?;
        history.push(next.jtilde);
        let change = (next.jtilde - opt.jtilde).abs();
        opt = next;
        if change < tol {
            return Ok((opt, history));
        }
    }
    Ok((opt, history))
}
