//! Explicit Godunov finite-volume solver with the interface coupling at `x = 0`.

use crate::error::{Error, Result};
use crate::flux::{ConvexFlux, FluxPair};
use crate::stepfn::StepFn;

/// Cell averages on a uniform grid whose faces include `x = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    /// Left face of cell 0.
    pub x0: f64,
    pub dx: f64,
    pub u: Vec<f64>,
    pub t: f64,
}

impl Profile {
    pub fn center(&self, i: usize) -> f64 {
        self.x0 + (i as f64 + 0.5) * self.dx
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.u.len()).map(|i| self.center(i)).collect()
    }

    /// Value of the cell containing `x` (clamped to the grid).
    pub fn eval(&self, x: f64) -> f64 {
        let k = ((x - self.x0) / self.dx).floor();
        let k = k.clamp(0.0, (self.u.len() - 1) as f64) as usize;
        self.u[k]
    }

    /// `∫_a^b |u - w|` against a reference evaluated at cell centers, on cells inside `[a, b]`.
    pub fn l1_against(&self, a: f64, b: f64, w: impl Fn(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for (i, &u) in self.u.iter().enumerate() {
            let l = (self.x0 + i as f64 * self.dx).max(a);
            let r = (self.x0 + (i + 1) as f64 * self.dx).min(b);
            if r > l {
                acc += (u - w(0.5 * (l + r))).abs() * (r - l);
            }
        }
        acc
    }
}

/// Godunov flux for one convex flux.
pub fn godunov_flux(h: &ConvexFlux, a: f64, b: f64) -> f64 {
    let th = h.theta();
    h.eval(a.max(th)).max(h.eval(b.min(th)))
}

/// Coupling flux at the interface face: `a` is the g-side state, `b` the f-side state.
pub fn interface_flux(pair: &FluxPair, a: f64, b: f64) -> f64 {
    pair.g.eval(a.max(pair.g.theta())).max(pair.f.eval(b.min(pair.f.theta())))
}

#[derive(Clone, Copy, Debug)]
pub struct GodunovParams {
    pub dx: f64,
    pub cfl: f64,
    /// Spatial window that must be free of boundary effects at the final time.
    pub window: (f64, f64),
}

impl GodunovParams {
    pub fn new(dx: f64, cfl: f64, window: (f64, f64)) -> Self {
        GodunovParams { dx, cfl, window }
    }
}

struct Grid {
    kmin: i64,
    n: usize,
}

fn build_grid(u0: &StepFn, pair: &FluxPair, t_final: f64, p: &GodunovParams) -> Grid {
    let mut lo = p.window.0.min(0.0);
    let mut hi = p.window.1.max(0.0);
    if let Some((a, b)) = u0.support_hull() {
        lo = lo.min(a);
        hi = hi.max(b);
    }
    let (umin, umax) = data_range(u0, pair);
    let speed = pair.f.max_speed(umin, umax).max(pair.g.max_speed(umin, umax));
    let pad = speed * t_final + 8.0 * p.dx;
    let kmin = ((lo - pad) / p.dx).floor() as i64;
    let kmax = ((hi + pad) / p.dx).ceil() as i64;
    Grid { kmin, n: (kmax - kmin).max(4) as usize }
}

fn data_range(u0: &StepFn, pair: &FluxPair) -> (f64, f64) {
    let lo = u0.min_value().min(pair.f.theta()).min(pair.g.theta());
    let hi = u0.max_value().max(pair.f.theta()).max(pair.g.theta());
    (lo, hi)
}

/// Solver state; the face at index `iface` sits at `x = 0`.
pub struct FvState<'a> {
    pair: &'a FluxPair,
    pub cells: Vec<f64>,
    pub dx: f64,
    pub cfl: f64,
    pub interface_index: usize,
    x0: f64,
    pub t: f64,
    /// Upper bound on the time step; the CFL step is used when smaller.
    pub dt_max: f64,
    fluxes: Vec<f64>,
}

impl<'a> FvState<'a> {
    pub fn new(u0: &StepFn, pair: &'a FluxPair, t_final: f64, p: &GodunovParams) -> Result<Self> {
        if !(t_final > 0.0) {
            return Err(Error::Input(format!("final time must be positive, got {t_final}")));
        }
        if !(p.dx > 0.0) || !(p.cfl > 0.0 && p.cfl < 1.0) {
            return Err(Error::Input(format!("need dx>0 and 0<cfl<1, got dx={} cfl={}", p.dx, p.cfl)));
        }
        let grid = build_grid(u0, pair, t_final, p);
        let x0 = grid.kmin as f64 * p.dx;
        let cells = (0..grid.n)
            .map(|i| {
                let l = x0 + i as f64 * p.dx;
                u0.integrate(l, l + p.dx) / p.dx
            })
            .collect();
        Ok(FvState {
            pair,
            cells,
            dx: p.dx,
            cfl: p.cfl,
            interface_index: (-grid.kmin) as usize,
            x0,
            t: 0.0,
            dt_max: f64::INFINITY,
            fluxes: vec![0.0; grid.n + 1],
        })
    }

    fn max_speed(&self) -> f64 {
        let (l, r) = self.cells.split_at(self.interface_index);
        let sg = l.iter().fold(0.0f64, |m, &u| m.max(self.pair.g.deriv(u).abs()));
        let sf = r.iter().fold(0.0f64, |m, &u| m.max(self.pair.f.deriv(u).abs()));
        sg.max(sf)
    }

    /// Advance to `t_stop`, recomputing the time step every step.
    pub fn advance_to(&mut self, t_stop: f64) -> Result<()> {
        let floor = 1e-14 * t_stop.max(1.0);
        let n = self.cells.len();
        while self.t < t_stop {
            let s = self.max_speed();
            if !s.is_finite() {
                return Err(Error::Stability(format!("non-finite wave speed at t={}", self.t)));
            }
            let mut dt = if s > 0.0 { self.cfl * self.dx / s } else { t_stop - self.t }.min(self.dt_max);
            if self.t + dt > t_stop {
                dt = t_stop - self.t;
            }
            if dt < floor && t_stop - self.t > floor {
                return Err(Error::Stability(format!("time step {dt} fell below floor at t={}", self.t)));
            }
            let c = &self.cells;
            // transmissive ends
            self.fluxes[0] = self.face_flux(0, c[0], c[0]);
            for k in 1..n {
                self.fluxes[k] = self.face_flux(k, c[k - 1], c[k]);
            }
            self.fluxes[n] = self.face_flux(n, c[n - 1], c[n - 1]);
            let r = dt / self.dx;
            for i in 0..n {
                self.cells[i] -= r * (self.fluxes[i + 1] - self.fluxes[i]);
            }
            if self.cells.iter().any(|v| !v.is_finite()) {
                return Err(Error::Stability(format!("non-finite cell value at t={}", self.t)));
            }
            self.t += dt;
            if t_stop - self.t <= floor {
                self.t = t_stop;
            }
        }
        Ok(())
    }

    fn face_flux(&self, k: usize, a: f64, b: f64) -> f64 {
        use std::cmp::Ordering::*;
        match k.cmp(&self.interface_index) {
            Less => godunov_flux(&self.pair.g, a, b),
            Equal => interface_flux(self.pair, a, b),
            Greater => godunov_flux(&self.pair.f, a, b),
        }
    }

    pub fn profile(&self) -> Profile {
        Profile { x0: self.x0, dx: self.dx, u: self.cells.clone(), t: self.t }
    }
}

/// Solve to time `t_final` and return the cell averages.
pub fn run(u0: &StepFn, pair: &FluxPair, t_final: f64, p: &GodunovParams) -> Result<Profile> {
    let mut st = FvState::new(u0, pair, t_final, p)?;
    st.advance_to(t_final)?;
    Ok(st.profile())
}

/// Profiles at each of the sorted `times`, all from one run.
pub fn run_snapshots(u0: &StepFn, pair: &FluxPair, times: &[f64], p: &GodunovParams) -> Result<Vec<Profile>> {
    let t_final = times.iter().cloned().fold(0.0, f64::max);
    let mut st = FvState::new(u0, pair, t_final, p)?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        st.advance_to(t)?;
        out.push(st.profile());
    }
    Ok(out)
}
