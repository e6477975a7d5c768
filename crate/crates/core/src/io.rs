//! JSON configs and CSV files used by the command-line front end.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::backward::{BackwardSpec, Rho};
use crate::control::{DiscSpec, TargetSpec};
use crate::error::{Error, Result};
use crate::flux::{ConvexFlux, FluxPair};
use crate::hj_forward::GridSpec;
use crate::monofn::MonoFn;
use crate::reachable::{ReachSpec, ReachTarget};
use crate::stepfn::StepFn;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FluxConfig {
    Quadratic { a: f64, b: f64, c: f64 },
    Tabulated { samples: Vec<[f64; 2]> },
}

impl FluxConfig {
    pub fn build(&self) -> Result<ConvexFlux> {
        match self {
            FluxConfig::Quadratic { a, b, c } => ConvexFlux::quadratic(*a, *b, *c),
            FluxConfig::Tabulated { samples } => {
                let s: Vec<(f64, f64)> = samples.iter().map(|p| (p[0], p[1])).collect();
                ConvexFlux::tabulated(&s)
            }
        }
    }
}

/// `f` acts on `x > 0`, `g` on `x < 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairConfig {
    pub f: FluxConfig,
    pub g: FluxConfig,
}

impl PairConfig {
    pub fn build(&self) -> Result<FluxPair> {
        FluxPair::new(self.f.build().map_err(|e| e.context("flux f"))?, self.g.build().map_err(|e| e.context("flux g"))?)
    }
}

/// Step function on disk.
///
/// Without a domain there is one more value than breakpoints. With a domain
/// `[lo, hi]` the breakpoints are left piece edges (the first one at `lo`) and
/// the counts match.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepFnFile {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<[f64; 2]>,
}

impl StepFnFile {
    pub fn to_step(&self) -> Result<StepFn> {
        let (b, v) = (&self.breakpoints, &self.values);
        match self.domain {
            None => {
                if v.len() != b.len() + 1 {
                    return Err(Error::Input(format!("step function needs {} values for {} breakpoints, got {}", b.len() + 1, b.len(), v.len())));
                }
                StepFn::new(b.clone(), v.clone())
            }
            Some([lo, hi]) => {
                if !(lo < hi) {
                    return Err(Error::Input(format!("step function domain [{lo}, {hi}] is empty")));
                }
                if b.is_empty() || v.len() != b.len() {
                    return Err(Error::Input(format!("interval step function needs matching nonzero counts, got {} and {}", b.len(), v.len())));
                }
                if b[0] != lo || b.iter().any(|&x| x >= hi) {
                    return Err(Error::Input(format!("breakpoints must start at {lo} and stay below {hi}")));
                }
                StepFn::new(b[1..].to_vec(), v.clone())
            }
        }
    }

    pub fn from_step(s: &StepFn) -> Self {
        StepFnFile { breakpoints: s.breaks().to_vec(), values: s.values().to_vec(), domain: None }
    }
}

/// `y` as a step function (flat pieces, unit-slope tails) or the identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum YConfig {
    Named(String),
    Step(StepFnFile),
}

impl YConfig {
    pub fn build(&self) -> Result<MonoFn> {
        match self {
            YConfig::Named(s) if s == "identity" => Ok(MonoFn::identity()),
            YConfig::Named(s) => Err(Error::Input(format!("unknown y '{s}', expected \"identity\" or a step function"))),
            YConfig::Step(s) => MonoFn::from_step(&s.to_step()?),
        }
    }
}

fn default_cfl() -> f64 {
    0.9
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ForwardConfig {
    pub fluxes: PairConfig,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub u0: StepFnFile,
    pub grid: GridSpec,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleConfig {
    pub fluxes: PairConfig,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub u0: StepFnFile,
    pub dx: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    pub window: [f64; 2],
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_target_l1() -> f64 {
    1e-2
}

fn default_tmap_points() -> usize {
    201
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BackwardConfig {
    pub fluxes: PairConfig,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub rho: StepFnFile,
    pub y: YConfig,
    /// Fixed number of levels; refinement to `target_l1` when absent.
    #[serde(rename = "N", default)]
    pub n: Option<usize>,
    #[serde(default = "default_target_l1")]
    pub target_l1: f64,
    #[serde(default = "default_tmap_points")]
    pub tmap_points: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl BackwardConfig {
    pub fn spec(&self) -> Result<BackwardSpec> {
        Ok(BackwardSpec { t_final: self.t_final, r: self.r, rho: Rho::Step(self.rho.to_step()?), y: self.y.build()? })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TargetConfig {
    pub k: StepFnFile,
    #[serde(rename = "C")]
    pub c: f64,
}

impl TargetConfig {
    pub fn build(&self) -> Result<TargetSpec> {
        TargetSpec::from_step(self.k.to_step()?, self.c)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub fluxes: PairConfig,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub target: TargetConfig,
    #[serde(default)]
    pub disc: DiscSpec,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// A reach target given inline as a step function or as a two-column CSV `x, W`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileConfig {
    Step(StepFnFile),
    Csv { csv: String },
}

fn default_reach_n() -> usize {
    64
}

fn default_reach_grid() -> usize {
    512
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReachConfig {
    pub fluxes: PairConfig,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "B1")]
    pub b1: f64,
    #[serde(rename = "B2")]
    pub b2: f64,
    pub delta: f64,
    #[serde(rename = "R", default)]
    pub r: Option<f64>,
    #[serde(rename = "W")]
    pub w: ProfileConfig,
    pub exterior: StepFnFile,
    #[serde(rename = "N", default = "default_reach_n")]
    pub n: usize,
    #[serde(default = "default_reach_grid")]
    pub grid: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ReachConfig {
    pub fn spec(&self) -> Result<ReachSpec> {
        let s = ReachSpec {
            t_final: self.t_final,
            c1: self.c1,
            c2: self.c2,
            b1: self.b1,
            b2: self.b2,
            delta: self.delta,
            r: self.r,
            exterior: self.exterior.to_step()?,
        };
        s.validate()?;
        Ok(s)
    }

    /// CSV paths are resolved against `base`.
    pub fn target(&self, base: &Path) -> Result<ReachTarget> {
        match &self.w {
            ProfileConfig::Step(s) => Ok(ReachTarget::from_step(s.to_step()?)),
            ProfileConfig::Csv { csv } => {
                let (_, cols) = read_columns(&base.join(csv))?;
                if cols.len() < 2 {
                    return Err(Error::Input("target CSV needs columns x, W".into()));
                }
                let (xs, ws) = (cols[0].clone(), cols[1].clone());
                dense_profile(xs, ws).map(ReachTarget::new)
            }
        }
    }
}

/// Piecewise-linear interpolant through samples, constant beyond the ends.
pub fn dense_profile(xs: Vec<f64>, ws: Vec<f64>) -> Result<impl Fn(f64) -> f64 + Send + Sync + 'static> {
    if xs.is_empty() || xs.len() != ws.len() {
        return Err(Error::Input("dense profile needs equal nonzero sample counts".into()));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) || xs.iter().chain(&ws).any(|v| !v.is_finite()) {
        return Err(Error::Input("dense profile needs finite, strictly increasing x".into()));
    }
    Ok(move |x: f64| {
        let k = xs.partition_point(|&v| v <= x);
        if k == 0 {
            ws[0]
        } else if k == xs.len() {
            ws[k - 1]
        } else {
            let s = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
            ws[k - 1] + s * (ws[k] - ws[k - 1])
        }
    })
}

/// DiscSpec is validated here since serde accepts zero sizes.
pub fn check_disc(d: &DiscSpec) -> Result<()> {
    if d.n_r == 0 || d.n_levels == 0 || d.n_ext == 0 {
        return Err(Error::Input(format!("disc sizes must be positive, got {d:?}")));
    }
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Input(format!("bad config {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Input(format!("cannot encode JSON: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Input(format!("cannot write {}: {e}", path.display())))
}

/// 17 significant digits, enough for an exact `f64` round trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_columns(path: &Path, headers: &[&str], cols: &[&[f64]]) -> Result<()> {
    let n = cols.first().map_or(0, |c| c.len());
    if headers.len() != cols.len() || cols.iter().any(|c| c.len() != n) {
        return Err(Error::Input("CSV columns must match the header and each other".into()));
    }
    let io = |e: csv::Error| Error::Input(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(headers).map_err(io)?;
    for i in 0..n {
        w.write_record(cols.iter().map(|c| fmt_f64(c[i]))).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Input(format!("cannot write {}: {e}", path.display())))
}

pub fn read_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let io = |e: csv::Error| Error::Input(format!("cannot read {}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(io)?;
    let headers: Vec<String> = r.headers().map_err(io)?.iter().map(str::to_string).collect();
    let mut cols = vec![Vec::new(); headers.len()];
    for rec in r.records() {
        let rec = rec.map_err(io)?;
        for (c, field) in cols.iter_mut().zip(rec.iter()) {
            c.push(field.trim().parse::<f64>().map_err(|e| Error::Input(format!("bad number '{field}' in {}: {e}", path.display())))?);
        }
    }
    Ok((headers, cols))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flux_config_parses() {
        let f: FluxConfig = serde_json::from_str(r#"{"kind":"quadratic","a":0.5,"b":0,"c":0}"#).unwrap();
        assert_eq!(f.build().unwrap().eval(2.0), 2.0);
        let t: FluxConfig = serde_json::from_str(r#"{"kind":"tabulated","samples":[[-2,4],[-1,1],[0,0],[1,1],[2,4]]}"#).unwrap();
        assert!(t.build().unwrap().eval(0.0).abs() < 1e-12);
        assert!(serde_json::from_str::<FluxConfig>(r#"{"kind":"cubic"}"#).is_err());
    }

    #[test]
    fn stepfn_file_conventions() {
        let s = StepFnFile { breakpoints: vec![0.0, 1.0], values: vec![1.0, 2.0, 3.0], domain: None }.to_step().unwrap();
        assert_eq!((s.eval(-1.0), s.eval(0.5), s.eval(1.0)), (1.0, 2.0, 3.0));
        let d = StepFnFile { breakpoints: vec![0.0, 0.5], values: vec![-2.0, -1.0], domain: Some([0.0, 1.0]) }.to_step().unwrap();
        assert_eq!((d.eval(0.2), d.eval(0.7)), (-2.0, -1.0));
        assert!(StepFnFile { breakpoints: vec![0.0], values: vec![1.0], domain: None }.to_step().is_err());
        assert!(StepFnFile { breakpoints: vec![0.1], values: vec![1.0], domain: Some([0.0, 1.0]) }.to_step().is_err());
    }

    #[test]
    fn y_config() {
        let y: YConfig = serde_json::from_str(r#""identity""#).unwrap();
        assert!(y.build().unwrap().is_identity());
        let y: YConfig = serde_json::from_str(r#"{"breakpoints":[0],"values":[-1,1]}"#).unwrap();
        assert_eq!(y.build().unwrap().eval(0.5), 1.5);
        let y: YConfig = serde_json::from_str(r#""shifted""#).unwrap();
        assert!(y.build().is_err());
    }

    #[test]
    fn dense_profile_interpolates() {
        let w = dense_profile(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 0.0]).unwrap();
        assert_eq!((w(-1.0), w(0.5), w(2.0), w(9.0)), (0.0, 1.0, 1.0, 0.0));
        assert!(dense_profile(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(v in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 1..50)) {
            let dir = std::env::temp_dir().join(format!("dflux-io-{}", std::process::id()));
            std::fs::create_dir_all(&dir).unwrap();
            let path = dir.join("rt.csv");
            let x: Vec<f64> = (0..v.len()).map(|i| i as f64 * 0.1).collect();
            write_columns(&path, &["x", "u"], &[&x, &v]).unwrap();
            let (h, cols) = read_columns(&path).unwrap();
            prop_assert_eq!(h, vec!["x".to_string(), "u".to_string()]);
            prop_assert_eq!(&cols[0], &x);
            prop_assert_eq!(cols[1].iter().map(|f| f.to_bits()).collect::<Vec<_>>(), v.iter().map(|f| f.to_bits()).collect::<Vec<_>>());
        }
    }
}
