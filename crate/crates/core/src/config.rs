//! Run configuration files.
//!
//! A flat TOML file; only `[quadrature]` and `[malliavin]` are tables.
//!
//! ```toml
//! model = "ou"
//! theta_star = 0.031
//! c_alpha = [0.045, 0.068]
//! t_end = 7000
//! n_paths = 200
//! snapshots = "log:40:10:7000"
//!
//! [quadrature]
//! L = 200.0
//! n_points = 16385
//! ```

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::experiments::{PoissonSource, RunSpec, SnapshotSpec};
use crate::models::{BuiltinModel, ModelKind};
use crate::stats::DEFAULT_REFERENCE_SEED;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum SnapshotField {
    Spec(String),
    List(Vec<f64>),
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    /// Half-width of the symmetric grid; chosen from the density when absent.
    #[serde(rename = "L", alias = "l")]
    pub half_width: Option<f64>,
    pub n_points: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MalliavinConfig {
    pub anchors: Option<Vec<f64>>,
    pub pairs: Option<Vec<[f64; 2]>>,
    pub p: Option<u32>,
    /// Number of log-spaced sample times.
    pub times: Option<usize>,
    pub fit_window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    model: ModelKind,
    theta_star: f64,
    #[serde(default = "one")]
    sigma: f64,
    c_alpha: OneOrMany,
    #[serde(default = "one")]
    c0: f64,
    #[serde(default)]
    t0: f64,
    #[serde(default = "default_dt")]
    dt: f64,
    t_end: f64,
    #[serde(default = "default_paths")]
    n_paths: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    x0: f64,
    #[serde(default)]
    theta0: f64,
    snapshots: Option<SnapshotField>,
    variance_time: Option<f64>,
    sigma_bar: Option<f64>,
    w1_reference_seed: Option<u64>,
    poisson_source: Option<PoissonSource>,
    #[serde(default)]
    quadrature: QuadratureConfig,
    #[serde(default)]
    malliavin: MalliavinConfig,
}

fn one() -> f64 {
    1.0
}

fn default_dt() -> f64 {
    0.1
}

fn default_paths() -> usize {
    1000
}

/// Parses `"log:<n>:<t_min>:<t_max>"`.
pub fn parse_snapshot_spec(s: &str) -> Result<SnapshotSpec> {
    let bad = || Error::Config(format!("snapshots: expected \"log:<n>:<t_min>:<t_max>\", got {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 4 || parts[0].trim() != "log" {
        return Err(bad());
    }
    let n = parts[1].trim().parse::<usize>().map_err(|_| bad())?;
    let t_min = parts[2].trim().parse::<f64>().map_err(|_| bad())?;
    let t_max = parts[3].trim().parse::<f64>().map_err(|_| bad())?;
    Ok(SnapshotSpec::Log { n, t_min, t_max })
}

/// Parses configuration text into a run specification.
pub fn parse(text: &str) -> Result<RunSpec> {
    let raw: FileConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    let model = BuiltinModel::new(raw.model, raw.theta_star, raw.sigma)?;
    let c_alphas = match raw.c_alpha {
        OneOrMany::One(c) => vec![c],
        OneOrMany::Many(v) if !v.is_empty() => v,
        OneOrMany::Many(_) => return Err(Error::Config("c_alpha: empty list".into())),
    };
    let snapshots = match raw.snapshots {
        None => SnapshotSpec::List(vec![raw.t_end]),
        Some(SnapshotField::Spec(s)) => parse_snapshot_spec(&s)?,
        Some(SnapshotField::List(v)) => SnapshotSpec::List(v),
    };
    if let Some(s) = raw.sigma_bar {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Config(format!("sigma_bar: must be positive, got {s}")));
        }
    }
    let spec = RunSpec {
        label: "custom".into(),
        model,
        c_alphas,
        c0: raw.c0,
        t0: raw.t0,
        dt: raw.dt,
        t_end: raw.t_end,
        n_paths: raw.n_paths,
        seed: raw.seed,
        x0: raw.x0,
        theta0: raw.theta0,
        snapshots,
        variance_time: raw.variance_time.unwrap_or(raw.t_end),
        sigma_bar_override: raw.sigma_bar,
        reference_seed: raw.w1_reference_seed.unwrap_or(DEFAULT_REFERENCE_SEED),
        poisson_source: raw.poisson_source.unwrap_or_default(),
        quadrature: raw.quadrature,
        malliavin: raw.malliavin,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn load(path: &Path) -> Result<RunSpec> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("config: cannot read {}: {e}", path.display())))?;
    parse(&text)
}
