use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use dflux_core::backward::{self, BackwardSpec, Rho};
use dflux_core::control::{self, DiscSpec, TargetSpec};
use dflux_core::godunov::{self, GodunovParams};
use dflux_core::hj_forward::{solve_profile, ForwardParams, GridSpec};
use dflux_core::monofn::MonoFn;
use dflux_core::reachable::{self, ReachSpec, ReachTarget};
use dflux_core::{FluxPair, StepFn};

fn forward(c: &mut Criterion) {
    let pair = FluxPair::quadratic_pair();
    let u0 = StepFn::new(vec![-1.0, -0.2, 0.4], vec![0.3, 1.2, -0.5, 0.2]).unwrap();
    let grid = GridSpec { x_min: -2.0, x_max: 2.0, nx: 1001, nt: 50 };
    c.bench_function("solve_profile nx=1001", |b| b.iter(|| solve_profile(black_box(&u0), &pair, 1.0, &grid, ForwardParams::default()).unwrap()));
    let gp = GodunovParams::new(2e-3, 0.9, (-2.0, 2.0));
    c.bench_function("godunov dx=2e-3", |b| b.iter(|| godunov::run(black_box(&u0), &pair, 1.0, &gp).unwrap()));
}

fn backward_construct(c: &mut Criterion) {
    let pair = FluxPair::quadratic_pair();
    let spec = BackwardSpec { t_final: 1.0, r: 1.0, rho: Rho::func(|x| -1.2 + 0.5 * x), y: MonoFn::identity() };
    c.bench_function("backward construct N=64", |b| b.iter(|| backward::construct(black_box(&spec), &pair, 64).unwrap()));
}

fn optimal_control(c: &mut Criterion) {
    let pair = FluxPair::quadratic_pair();
    let tg = TargetSpec::from_step(StepFn::new(vec![-1.0, 0.0, 1.0], vec![0.0, 0.2, 0.5, 0.0]).unwrap(), 1.0).unwrap();
    let disc = DiscSpec { n_r: 8, n_levels: 8, n_ext: 64 };
    let mut g = c.benchmark_group("control");
    g.sample_size(10);
    g.bench_function("minimize small disc", |b| b.iter(|| control::minimize(black_box(&tg), &pair, 1.0, &disc).unwrap()));
    g.finish();
}

fn reach(c: &mut Criterion) {
    let pair = FluxPair::quadratic_pair();
    let spec = ReachSpec { t_final: 1.0, c1: -1.5, c2: 1.5, b1: -3.0, b2: 3.0, delta: 0.25, r: None, exterior: StepFn::riemann(0.0, -0.5, 0.5) };
    let w = ReachTarget::new(|_| 0.0);
    c.bench_function("membership grid=256", |b| b.iter(|| reachable::membership(black_box(&w), &spec, &pair, 256).unwrap()));
}

criterion_group!(benches, forward, backward_construct, optimal_control, reach);
criterion_main!(benches);
