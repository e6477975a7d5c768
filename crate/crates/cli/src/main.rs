//! `dflux`: forward solves, backward construction, optimal and exact control from JSON configs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use dflux_core::backward::{self, BackwardPlan};
use dflux_core::control::{self, cost_j};
use dflux_core::godunov::{self, GodunovParams};
use dflux_core::hj_forward::{check_interface, solve_profile, ForwardParams, GridSpec};
use dflux_core::io::{self, StepFnFile};
use dflux_core::reachable::{self, Membership, Witness};
use dflux_core::Error;

#[derive(Parser)]
#[command(name = "dflux", version, about = "Conservation laws with a flux discontinuous at x = 0")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker thread cap.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the config seed; recorded in the outputs.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve with the explicit formula; writes profile.csv, profile.json, interface.json.
    Forward(Common),
    /// Solve with the Godunov scheme; writes profile.csv, profile.json.
    Oracle(Common),
    /// Backward construction; writes u0.json, tmap.csv, roundtrip.json.
    Backward(Common),
    /// Minimize the control cost; writes optimum.json, u0.json.
    Optimize(Common),
    /// Reachable-set membership and exact control.
    Reach {
        #[command(subcommand)]
        action: ReachCmd,
    },
}

#[derive(Subcommand)]
enum ReachCmd {
    /// Writes report.json.
    Check(Common),
    /// Writes report.json, u0.json, profile.csv.
    Control(Common),
}

const DEFAULT_SEED: u64 = 0;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

// 2 for bad input, 3 for solver failures
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(err) if !err.is_validation() => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<()> {
    let (common, which) = match &cli.cmd {
        Cmd::Forward(c) => (c, "forward"),
        Cmd::Oracle(c) => (c, "oracle"),
        Cmd::Backward(c) => (c, "backward"),
        Cmd::Optimize(c) => (c, "optimize"),
        Cmd::Reach { action: ReachCmd::Check(c) } => (c, "reach-check"),
        Cmd::Reach { action: ReachCmd::Control(c) } => (c, "reach-control"),
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().context("thread pool")?;
    }
    fs::create_dir_all(&common.out).with_context(|| format!("cannot create {}", common.out.display()))?;
    match which {
        "forward" => cmd_forward(common),
        "oracle" => cmd_oracle(common),
        "backward" => cmd_backward(common),
        "optimize" => cmd_optimize(common),
        "reach-check" => cmd_reach(common, false),
        _ => cmd_reach(common, true),
    }
}

fn seed(c: &Common, from_config: Option<u64>) -> u64 {
    c.seed.or(from_config).unwrap_or(DEFAULT_SEED)
}

fn cmd_forward(c: &Common) -> Result<()> {
    let cfg: io::ForwardConfig = io::load_json(&c.config)?;
    let pair = cfg.fluxes.build()?;
    let u0 = cfg.u0.to_step()?;
    let sol = solve_profile(&u0, &pair, cfg.t_final, &cfg.grid, ForwardParams::default())?;
    let rep = check_interface(&sol, &pair, 1e-6);
    io::write_columns(&c.out.join("profile.csv"), &["x", "u"], &[&sol.x, &sol.u])?;
    let side = json!({
        "T": cfg.t_final,
        "seed": seed(c, cfg.seed),
        "R1": sol.r1_final,
        "L1": sol.l1_final,
        "traces": { "t": sol.t_grid, "R1": sol.r1, "L1": sol.l1, "minus": sol.trace_minus, "plus": sol.trace_plus },
    });
    io::write_json(&c.out.join("profile.json"), &side)?;
    io::write_json(&c.out.join("interface.json"), &rep)?;
    Ok(())
}

fn cmd_oracle(c: &Common) -> Result<()> {
    let cfg: io::OracleConfig = io::load_json(&c.config)?;
    let pair = cfg.fluxes.build()?;
    let u0 = cfg.u0.to_step()?;
    let gp = GodunovParams::new(cfg.dx, cfg.cfl, (cfg.window[0], cfg.window[1]));
    let prof = godunov::run(&u0, &pair, cfg.t_final, &gp)?;
    let (a, b) = (cfg.window[0], cfg.window[1]);
    let keep: Vec<usize> = (0..prof.u.len()).filter(|&i| (a..=b).contains(&prof.center(i))).collect();
    let xs: Vec<f64> = keep.iter().map(|&i| prof.center(i)).collect();
    let us: Vec<f64> = keep.iter().map(|&i| prof.u[i]).collect();
    io::write_columns(&c.out.join("profile.csv"), &["x", "u"], &[&xs, &us])?;
    io::write_json(&c.out.join("profile.json"), &json!({ "T": cfg.t_final, "seed": seed(c, cfg.seed), "dx": cfg.dx, "cfl": cfg.cfl }))?;
    Ok(())
}

fn tmap_csv(path: &Path, plan: &BackwardPlan, points: usize) -> Result<()> {
    let (lo, hi) = if plan.mirrored { (-plan.r, 0.0) } else { (0.0, plan.r) };
    let n = points.max(2);
    let (mut xs, mut ts) = (Vec::new(), Vec::new());
    for i in 0..n {
        let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        if let Some(t) = plan.tmap(x) {
            xs.push(x);
            ts.push(t);
        }
    }
    Ok(io::write_columns(path, &["x", "t"], &[&xs, &ts])?)
}

fn cmd_backward(c: &Common) -> Result<()> {
    let cfg: io::BackwardConfig = io::load_json(&c.config)?;
    let pair = cfg.fluxes.build()?;
    let spec = cfg.spec()?;
    let (plan, n, history) = match cfg.n {
        Some(n) => {
            let plan = backward::construct_any(&spec, &pair, n)?;
            let err = backward::round_trip_l1(&spec, &pair, &plan, 512)?;
            (plan, n, vec![(n, err)])
        }
        None => {
            let r = backward::refine(&spec, &pair, cfg.target_l1)?;
            (r.plan, r.n, r.history)
        }
    };
    io::write_json(&c.out.join("u0.json"), &StepFnFile::from_step(&plan.u0))?;
    tmap_csv(&c.out.join("tmap.csv"), &plan, cfg.tmap_points)?;
    let (tv, bound) = plan.bv_check();
    let report = json!({
        "seed": seed(c, cfg.seed),
        "N": n,
        "l1": history.last().map(|h| h.1),
        "history": history,
        "levels": plan.levels.len(),
        "bv": { "tv": tv, "bound": bound },
    });
    io::write_json(&c.out.join("roundtrip.json"), &report)?;
    Ok(())
}

fn cmd_optimize(c: &Common) -> Result<()> {
    let cfg: io::OptimizeConfig = io::load_json(&c.config)?;
    io::check_disc(&cfg.disc)?;
    let pair = cfg.fluxes.build()?;
    let target = cfg.target.build()?;
    let t = cfg.t_final;
    let opt = control::minimize(&target, &pair, t, &cfg.disc)?;
    let half = target.c + opt.bounds.m1 + opt.bounds.r0;
    let grid = GridSpec { x_min: -half, x_max: half, nx: 4001, nt: 16 };
    let sol = solve_profile(&opt.u0, &pair, t, &grid, ForwardParams::default())?;
    let j = cost_j(&sol, &target, &pair);
    let knots: Vec<[f64; 3]> = opt.triple.y.knots().iter().map(|k| [k.x, k.left, k.right]).collect();
    let report = json!({
        "seed": seed(c, cfg.seed),
        "side": format!("{:?}", opt.side),
        "R": opt.triple.r,
        "rho": StepFnFile::from_step(&opt.triple.rho),
        "y": { "knots": knots },
        "Jtilde": opt.jtilde,
        "J": j.value,
        "J_clamped": j.clamped,
        "bounds": opt.bounds,
    });
    io::write_json(&c.out.join("optimum.json"), &report)?;
    io::write_json(&c.out.join("u0.json"), &StepFnFile::from_step(&opt.u0))?;
    Ok(())
}

fn witness_json(w: &Witness) -> Value {
    json!({ "side": format!("{:?}", w.side), "R": w.r, "y": w.y, "rho": w.rho, "t": w.t })
}

fn membership_json(m: &Membership) -> Value {
    let mut v = json!({ "member": m.member });
    if let Some(w) = &m.witness {
        v["witness"] = witness_json(w);
    }
    if let Some(x) = &m.violation {
        v["violation"] = json!({ "kind": x.kind.as_str(), "side": format!("{:?}", x.side), "R": x.r, "x": x.x });
    }
    v
}

fn cmd_reach(c: &Common, control: bool) -> Result<()> {
    let cfg: io::ReachConfig = io::load_json(&c.config)?;
    let pair = cfg.fluxes.build()?;
    let spec = cfg.spec()?;
    let base = c.config.parent().unwrap_or(Path::new("."));
    let target = cfg.target(base)?;
    let seed = seed(c, cfg.seed);
    if !control {
        let m = reachable::membership(&target, &spec, &pair, cfg.grid)?;
        let mut v = membership_json(&m);
        v["seed"] = json!(seed);
        io::write_json(&c.out.join("report.json"), &v)?;
        return Ok(());
    }
    let ctrl = reachable::exact_control(&target, &spec, &pair, cfg.n)?;
    let report = json!({
        "seed": seed,
        "member": true,
        "witness": witness_json(&ctrl.witness),
        "l1_error": ctrl.l1_error,
        "free_region": { "P1": ctrl.free.p1, "P2": ctrl.free.p2, "lambda1": ctrl.free.lambda1, "lambda2": ctrl.free.lambda2 },
    });
    io::write_json(&c.out.join("report.json"), &report)?;
    io::write_json(&c.out.join("u0.json"), &StepFnFile::from_step(&ctrl.u0))?;
    io::write_columns(&c.out.join("profile.csv"), &["x", "u"], &[&ctrl.sol.x, &ctrl.sol.u])?;
    Ok(())
}
