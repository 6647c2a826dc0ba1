//! Example presets and the pipelines behind every output table: ensemble
//! simulation, fluctuation statistics, W1 rates, closed-form constants,
//! Poisson solutions and Malliavin moment tables.
//!
//! Every table is rendered to a `String` first so reruns can be compared
//! byte for byte; [`write_file`] only puts it on disk.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::config::{MalliavinConfig, QuadratureConfig};
use crate::error::{Error, Result};
use crate::malliavin::{derivative_samples, moment_scaling, AnchorSet, MomentSeries};
use crate::models::{invariant_density, BuiltinModel, DensityTable, DEFAULT_DENSITY_POINTS};
use crate::poisson::{self, limiting_variance, PoissonSolution, VarianceReport};
use crate::quadrature::UniformGrid;
use crate::simulate::{log_schedule, run_ensemble_with, PathEnsemble, RunOptions, SimConfig};
use crate::stats::{fluctuation_stats, rate_fit, w1_vs_gaussian, FluctuationStats, RateFit, RateSeries, W1Mode};

/// Written into the header of every CSV file.
pub const SCHEMA_VERSION: u32 = 1;

/// A fitted W1 slope at or above this value marks the run as non-decaying.
pub const NON_DECAY_SLOPE: f64 = -0.05;

/// Largest fraction of flagged paths tolerated by the command line.
pub const FLAGGED_LIMIT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub enum SnapshotSpec {
    /// `n` log-spaced times in `[t_min, t_max]`, snapped to the grid.
    Log { n: usize, t_min: f64, t_max: f64 },
    List(Vec<f64>),
}

impl std::fmt::Display for SnapshotSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SnapshotSpec::Log { n, t_min, t_max } => write!(f, "log:{n}:{t_min}:{t_max}"),
            SnapshotSpec::List(v) => {
                let items: Vec<String> = v.iter().map(|t| t.to_string()).collect();
                write!(f, "[{}]", items.join(" "))
            }
        }
    }
}

/// Source term tabulated by the `poisson` subcommand, all at `θ*`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoissonSource {
    /// `ḡ_θθ − g_θθ`.
    #[default]
    Curvature,
    /// `ḡ_θ − g_θ`.
    Prelimit,
    /// `h − h̄`.
    Fluctuation,
}

impl PoissonSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            PoissonSource::Curvature => "curvature",
            PoissonSource::Prelimit => "prelimit",
            PoissonSource::Fluctuation => "fluctuation",
        }
    }
}

/// Fully resolved run description shared by presets and config files.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub label: String,
    pub model: BuiltinModel,
    pub c_alphas: Vec<f64>,
    pub c0: f64,
    pub t0: f64,
    pub dt: f64,
    pub t_end: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub x0: f64,
    pub theta0: f64,
    pub snapshots: SnapshotSpec,
    /// Time at which `t·Var` is reported in the summary.
    pub variance_time: f64,
    /// Replaces the closed-form `Σ̄` as the variance of the Gaussian target.
    pub sigma_bar_override: Option<f64>,
    pub reference_seed: u64,
    pub poisson_source: PoissonSource,
    pub quadrature: QuadratureConfig,
    pub malliavin: MalliavinConfig,
}

/// Command-line changes allowed on top of a preset or config file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub n_paths: Option<usize>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        for &c in &self.c_alphas {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("c_alpha: must be positive, got {c}")));
            }
        }
        if self.c_alphas.is_empty() {
            return Err(Error::Config("c_alpha: at least one value is required".into()));
        }
        if let Some(n) = self.quadrature.n_points {
            if n < 3 || n % 2 == 0 {
                return Err(Error::Config(format!("quadrature.n_points: must be odd and at least 3, got {n}")));
            }
        }
        if let Some(l) = self.quadrature.half_width {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("quadrature.L: must be positive, got {l}")));
            }
        }
        self.sim_config(self.c_alphas[0])?.validate()?;
        Ok(())
    }

    /// Requested snapshot times merged with the variance-report time.
    pub fn snapshot_times(&self) -> Result<Vec<f64>> {
        let mut times = match &self.snapshots {
            SnapshotSpec::Log { n, t_min, t_max } => log_schedule(*n, *t_min, *t_max, self.t0, self.dt)?,
            SnapshotSpec::List(v) => v.clone(),
        };
        if !times.iter().any(|&t| same_time(t, self.variance_time)) {
            times.push(self.variance_time);
        }
        times.sort_by(f64::total_cmp);
        Ok(times)
    }

    pub fn sim_config(&self, c_alpha: f64) -> Result<SimConfig> {
        Ok(SimConfig {
            dt: self.dt,
            t0: self.t0,
            t_end: self.t_end,
            c_alpha,
            c0: self.c0,
            x0: self.x0,
            theta0: self.theta0,
            n_paths: self.n_paths,
            master_seed: self.seed,
            snapshot_times: self.snapshot_times()?,
        })
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(n) = o.n_paths {
            self.n_paths = n;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(dt) = o.dt {
            self.dt = dt;
        }
        if let Some(t) = o.t_end {
            self.t_end = t;
        }
        self.validate()
    }

    /// Invariant density on the configured grid, or the automatic one.
    pub fn density(&self) -> Result<DensityTable> {
        let n = self.quadrature.n_points.unwrap_or(DEFAULT_DENSITY_POINTS);
        match self.quadrature.half_width {
            Some(l) if self.model.kind != crate::models::ModelKind::XIndependent => {
                invariant_density(&self.model, UniformGrid::symmetric(l, n)?)
            }
            _ => DensityTable::auto(&self.model, n),
        }
    }

    /// `key = value` lines describing the resolved configuration.
    pub fn describe(&self) -> Vec<(String, String)> {
        let alphas: Vec<String> = self.c_alphas.iter().map(|c| c.to_string()).collect();
        let opt = |v: Option<f64>| v.map_or_else(|| "auto".to_string(), |x| x.to_string());
        vec![
            ("run".into(), self.label.clone()),
            ("model".into(), self.model.kind.to_string()),
            ("theta_star".into(), self.model.theta_star.to_string()),
            ("sigma".into(), self.model.sigma.to_string()),
            ("c_alpha".into(), format!("[{}]", alphas.join(" "))),
            ("c0".into(), self.c0.to_string()),
            ("t0".into(), self.t0.to_string()),
            ("dt".into(), self.dt.to_string()),
            ("t_end".into(), self.t_end.to_string()),
            ("n_paths".into(), self.n_paths.to_string()),
            ("x0".into(), self.x0.to_string()),
            ("theta0".into(), self.theta0.to_string()),
            ("snapshots".into(), self.snapshots.to_string()),
            ("variance_time".into(), self.variance_time.to_string()),
            ("sigma_bar".into(), self.sigma_bar_override.map_or_else(|| "closed_form".into(), |s| s.to_string())),
            ("w1_reference_seed".into(), self.reference_seed.to_string()),
            ("poisson_source".into(), self.poisson_source.as_str().into()),
            ("quadrature.L".into(), opt(self.quadrature.half_width)),
            (
                "quadrature.n_points".into(),
                self.quadrature.n_points.unwrap_or(DEFAULT_DENSITY_POINTS).to_string(),
            ),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentPreset {
    pub name: &'static str,
    pub model: BuiltinModel,
    pub c_alphas: &'static [f64],
    pub t_end: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub variance_time: f64,
    /// Simulation estimates of `Σ̄` published with the figures, one per `C_α`.
    pub reported_sigma_bar: Option<&'static [f64]>,
}

pub const PRESET_NAMES: [&str; 3] = ["example1", "example2_ou", "example3_cubic"];

pub fn preset(name: &str) -> Result<ExperimentPreset> {
    match name {
        "example1" => Ok(ExperimentPreset {
            name: "example1",
            model: BuiltinModel::x_independent(2.3),
            c_alphas: &[0.43, 0.72, 0.78, 1.0],
            t_end: 5000.0,
            dt: 0.1,
            n_paths: 1100,
            variance_time: 5000.0,
            reported_sigma_bar: None,
        }),
        "example2_ou" => Ok(ExperimentPreset {
            name: "example2_ou",
            model: BuiltinModel::ou(0.031),
            c_alphas: &[0.045, 0.0496, 0.068],
            t_end: 7000.0,
            dt: 0.1,
            n_paths: 150,
            variance_time: 6500.0,
            reported_sigma_bar: Some(&[0.0016, 0.002, 0.0028]),
        }),
        "example3_cubic" => Ok(ExperimentPreset {
            name: "example3_cubic",
            model: BuiltinModel::cubic(0.035),
            c_alphas: &[0.0092, 0.011, 0.016],
            t_end: 10000.0,
            dt: 0.1,
            n_paths: 100,
            variance_time: 2000.0,
            reported_sigma_bar: Some(&[0.0003, 0.00034, 0.00038]),
        }),
        other => Err(Error::Config(format!(
            "preset: unknown preset {other:?} (expected one of {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}

impl ExperimentPreset {
    /// Run specification with the overrides applied. Paths start at
    /// `θ0 = θ*`, so finite-time curves carry no deterministic
    /// initial-condition bias.
    pub fn spec(&self, o: &Overrides) -> Result<RunSpec> {
        let t_end = o.t_end.unwrap_or(self.t_end);
        let mut spec = RunSpec {
            label: self.name.into(),
            model: self.model,
            c_alphas: self.c_alphas.to_vec(),
            c0: 1.0,
            t0: 0.0,
            dt: self.dt,
            t_end,
            n_paths: self.n_paths,
            seed: 0,
            x0: 0.0,
            theta0: self.model.theta_star,
            snapshots: SnapshotSpec::Log { n: 40, t_min: 10.0, t_max: t_end },
            variance_time: self.variance_time.min(t_end),
            sigma_bar_override: None,
            reference_seed: crate::stats::DEFAULT_REFERENCE_SEED,
            poisson_source: PoissonSource::default(),
            quadrature: QuadratureConfig::default(),
            malliavin: MalliavinConfig::default(),
        };
        spec.apply(o)?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct W1Point {
    pub t: f64,
    pub paired: f64,
    pub quantile: f64,
    /// `log W1 / log t` from the quantile-mode value.
    pub log_ratio: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub c_alpha: f64,
    pub report: VarianceReport,
    /// Variance of the Gaussian target of `√t(θ_t − θ*)`.
    pub target_variance: f64,
    pub w1: Vec<W1Point>,
    pub variance: Vec<FluctuationStats>,
    /// Slope of `log W1` against `log t` over `[t_end/10, t_end]`.
    pub w1_fit: std::result::Result<RateFit, String>,
    pub flagged: usize,
    pub n_paths: usize,
    pub variance_time: f64,
}

impl CaseResult {
    pub fn t_var_at(&self, t: f64) -> Option<f64> {
        self.variance.iter().find(|v| same_time(v.t, t)).map(|v| v.t_var)
    }

    pub fn t_var_reported(&self) -> f64 {
        self.t_var_at(self.variance_time).unwrap_or(f64::NAN)
    }

    pub fn final_log_ratio(&self) -> f64 {
        self.w1.last().map_or(f64::NAN, |p| p.log_ratio)
    }

    pub fn non_decaying(&self) -> bool {
        self.w1_fit.as_ref().is_ok_and(|f| f.slope >= NON_DECAY_SLOPE)
    }

    pub fn w1_series(&self) -> RateSeries {
        RateSeries {
            times: self.w1.iter().map(|p| p.t).collect(),
            values: self.w1.iter().map(|p| p.quantile).collect(),
            stderr: None,
        }
    }

    pub fn flagged_fraction(&self) -> f64 {
        self.flagged as f64 / self.n_paths as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub spec: RunSpec,
    pub cases: Vec<CaseResult>,
}

fn run_case(spec: &RunSpec, density: &DensityTable, c_alpha: f64, workers: Option<usize>) -> Result<CaseResult> {
    let model = &spec.model;
    let report = limiting_variance(model, density, model.theta_star, c_alpha)?;
    // without a limit law the unit Gaussian serves as a fixed reference
    let target_variance = spec.sigma_bar_override.or(report.sigma_bar).unwrap_or(1.0);
    let cfg = spec.sim_config(c_alpha)?;
    let ensemble = run_ensemble_with(model, &cfg, &RunOptions { workers, ..Default::default() })?;
    let mut w1 = Vec::with_capacity(cfg.snapshot_times.len());
    let mut variance = Vec::with_capacity(cfg.snapshot_times.len());
    for &t in &cfg.snapshot_times {
        let fs = fluctuation_stats(&ensemble, model.theta_star, t)?;
        let paired = w1_vs_gaussian(
            &fs.f_sample,
            0.0,
            target_variance,
            W1Mode::PairedEmpirical { seed: spec.reference_seed },
        )?;
        let quantile = w1_vs_gaussian(&fs.f_sample, 0.0, target_variance, W1Mode::Quantile)?;
        let log_ratio = if t > 1.0 { quantile.ln() / t.ln() } else { f64::NAN };
        w1.push(W1Point { t, paired, quantile, log_ratio, n: fs.n });
        variance.push(fs);
    }
    let mut case = CaseResult {
        c_alpha,
        report,
        target_variance,
        w1,
        variance,
        w1_fit: Err(String::new()),
        flagged: ensemble.flagged_count(),
        n_paths: ensemble.n_paths(),
        variance_time: spec.variance_time,
    };
    case.w1_fit = rate_fit(&case.w1_series(), (spec.t_end / 10.0, spec.t_end)).map_err(|e| e.to_string());
    Ok(case)
}

/// Runs every `C_α` of the specification.
pub fn run_spec(spec: &RunSpec, workers: Option<usize>) -> Result<Bundle> {
    spec.validate()?;
    let density = spec.density()?;
    let cases = spec
        .c_alphas
        .iter()
        .map(|&c| run_case(spec, &density, c, workers))
        .collect::<Result<_>>()?;
    Ok(Bundle { spec: spec.clone(), cases })
}

pub fn run_preset(name: &str, overrides: &Overrides, workers: Option<usize>) -> Result<Bundle> {
    run_spec(&preset(name)?.spec(overrides)?, workers)
}

pub fn run_custom(config_path: &Path, overrides: &Overrides, workers: Option<usize>) -> Result<Bundle> {
    let mut spec = crate::config::load(config_path)?;
    spec.apply(overrides)?;
    run_spec(&spec, workers)
}

fn header(spec: &RunSpec, flagged: usize, extra: &[(&str, String)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# schema_version = {SCHEMA_VERSION}");
    for (k, v) in spec.describe() {
        let _ = writeln!(out, "# {k} = {v}");
    }
    let _ = writeln!(out, "# master_seed = {}", spec.seed);
    let _ = writeln!(out, "# flagged_paths = {flagged}");
    for (k, v) in extra {
        let _ = writeln!(out, "# {k} = {v}");
    }
    out
}

/// Directory name of the outputs for one `C_α`.
pub fn case_dir(c_alpha: f64) -> String {
    format!("c_alpha_{c_alpha}")
}

impl Bundle {
    pub fn render_w1(&self, case: &CaseResult) -> String {
        let mut out = header(
            &self.spec,
            case.flagged,
            &[("c_alpha_run", case.c_alpha.to_string()), ("target_variance", case.target_variance.to_string())],
        );
        out.push_str("t,w1_paired,w1_quantile,log_w1_over_log_t,n_paths\n");
        for p in &case.w1 {
            let _ = writeln!(out, "{},{},{},{},{}", p.t, p.paired, p.quantile, p.log_ratio, p.n);
        }
        out
    }

    pub fn render_variance(&self, case: &CaseResult) -> String {
        let mut out = header(&self.spec, case.flagged, &[("c_alpha_run", case.c_alpha.to_string())]);
        out.push_str("t,mean_theta,var_theta,t_var,stderr\n");
        for v in &case.variance {
            let _ = writeln!(out, "{},{},{},{},{}", v.t, v.mean, v.var, v.t_var, v.t_var_stderr);
        }
        out
    }

    pub fn render_summary(&self) -> String {
        let flagged = self.cases.iter().map(|c| c.flagged).sum();
        let mut out = header(&self.spec, flagged, &[]);
        out.push_str(
            "preset,c_alpha,c_gbar,c_gbar_c_alpha,sigma_bar_closed_form,t_var_final,\
             log_w1_over_log_t_final,regime,w1_slope,w1_non_decaying\n",
        );
        for c in &self.cases {
            let slope = c.w1_fit.as_ref().map_or(f64::NAN, |f| f.slope);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                self.spec.label,
                c.c_alpha,
                c.report.c_gbar,
                c.report.c_gbar_c_alpha(),
                c.report.sigma_bar.unwrap_or(f64::NAN),
                c.t_var_reported(),
                c.final_log_ratio(),
                c.report.regime,
                slope,
                c.non_decaying(),
            );
        }
        out
    }

    /// All files of the bundle as `(relative path, contents)`.
    pub fn files(&self) -> Vec<(PathBuf, String)> {
        let mut files = vec![(PathBuf::from("summary.csv"), self.render_summary())];
        for c in &self.cases {
            let dir = PathBuf::from(case_dir(c.c_alpha));
            files.push((dir.join("w1.csv"), self.render_w1(c)));
            files.push((dir.join("variance_series.csv"), self.render_variance(c)));
        }
        files
    }

    pub fn max_flagged_fraction(&self) -> f64 {
        self.cases.iter().map(CaseResult::flagged_fraction).fold(0.0, f64::max)
    }
}

/// Writes `contents` to `root/rel`, creating directories as needed.
pub fn write_file(root: &Path, rel: &Path, contents: &str) -> Result<PathBuf> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&path, contents)?;
    Ok(path)
}

pub fn write_all(root: &Path, files: &[(PathBuf, String)]) -> Result<Vec<PathBuf>> {
    files.iter().map(|(rel, text)| write_file(root, rel, text)).collect()
}

/// Ensembles for every `C_α`, rendered as `snapshots.csv` tables.
pub fn snapshot_tables(spec: &RunSpec, workers: Option<usize>) -> Result<(Vec<(PathBuf, String)>, f64)> {
    let mut files = Vec::new();
    let mut worst: f64 = 0.0;
    for &c in &spec.c_alphas {
        let cfg = spec.sim_config(c)?;
        let ens: PathEnsemble = run_ensemble_with(&spec.model, &cfg, &RunOptions { workers, ..Default::default() })?;
        worst = worst.max(ens.flagged_count() as f64 / ens.n_paths() as f64);
        let mut out = header(spec, ens.flagged_count(), &[("c_alpha_run", c.to_string())]);
        out.push_str("t,path_index,x,theta\n");
        for (s, &t) in ens.snapshot_times.iter().enumerate() {
            for i in 0..ens.n_paths() {
                let _ = writeln!(out, "{t},{i},{},{}", ens.x[s][i], ens.theta[s][i]);
            }
        }
        files.push((PathBuf::from(case_dir(c)).join("snapshots.csv"), out));
    }
    Ok((files, worst))
}

pub fn variance_reports(spec: &RunSpec) -> Result<Vec<VarianceReport>> {
    let density = spec.density()?;
    spec.c_alphas
        .iter()
        .map(|&c| limiting_variance(&spec.model, &density, spec.model.theta_star, c))
        .collect()
}

pub fn render_variance_reports(spec: &RunSpec, reports: &[VarianceReport]) -> String {
    let mut out = header(spec, 0, &[]);
    out.push_str("model,theta_star,c_alpha,c_gbar,h_bar,sigma_bar,regime\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            spec.model.kind,
            spec.model.theta_star,
            r.c_alpha,
            r.c_gbar,
            r.h_bar,
            r.sigma_bar.unwrap_or(f64::NAN),
            r.regime
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonTable {
    pub density: DensityTable,
    pub source: Vec<f64>,
    pub solution: PoissonSolution,
}

pub fn poisson_table(spec: &RunSpec) -> Result<PoissonTable> {
    let density = spec.density()?;
    let (m, theta) = (&spec.model, spec.model.theta_star);
    let source = match spec.poisson_source {
        PoissonSource::Curvature => poisson::curvature_source(m, &density, theta)?,
        PoissonSource::Prelimit => poisson::prelimit_source(m, &density, theta)?,
        PoissonSource::Fluctuation => poisson::h_source(m, &density, theta)?,
    };
    let solution = poisson::solve(&source, m, &density)?;
    Ok(PoissonTable { density, source, solution })
}

pub fn render_poisson(spec: &RunSpec, table: &PoissonTable) -> String {
    let s = &table.solution;
    let mut out = header(
        spec,
        0,
        &[
            ("centering_residual", s.centering_residual.to_string()),
            ("tail_discrepancy", s.tail_discrepancy.to_string()),
        ],
    );
    out.push_str("x,m,H,v,v_x\n");
    for i in 0..s.x.len() {
        let _ = writeln!(out, "{},{},{},{},{}", s.x[i], table.density.m[i], table.source[i], s.v[i], s.v_x[i]);
    }
    out
}

/// Default number of log-spaced Malliavin sample times.
pub const DEFAULT_MALLIAVIN_TIMES: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct MalliavinResult {
    pub c_alpha: f64,
    pub c_gbar: f64,
    pub series: Vec<MomentSeries>,
}

/// Anchors, sample times, fit window and moment order.
pub type MalliavinPlan = (AnchorSet, Vec<f64>, (f64, f64), u32);

/// Anchors, sample times and fit window for a Malliavin run.
pub fn malliavin_plan(spec: &RunSpec) -> Result<MalliavinPlan> {
    let cfg = &spec.malliavin;
    let default = AnchorSet::default_for(spec.t_end, spec.t0, spec.dt);
    let first = cfg.anchors.clone().unwrap_or(default.first);
    let pairs = cfg
        .pairs
        .as_ref()
        .map_or(default.pairs, |v| v.iter().map(|&[a, b]| (a, b)).collect());
    let anchors = AnchorSet::new(first, pairs);
    let earliest = anchors.all_times().into_iter().fold(f64::INFINITY, f64::min);
    if !earliest.is_finite() {
        return Err(Error::Config("malliavin.anchors: no anchors given".into()));
    }
    let n = cfg.times.unwrap_or(DEFAULT_MALLIAVIN_TIMES);
    let times = log_schedule(n, earliest, spec.t_end, spec.t0, spec.dt)?;
    let window = match cfg.fit_window {
        Some([lo, hi]) => (lo, hi),
        None => (times[times.len() / 2], spec.t_end),
    };
    Ok((anchors, times, window, cfg.p.unwrap_or(1)))
}

pub fn malliavin_tables(spec: &RunSpec, workers: Option<usize>) -> Result<Vec<MalliavinResult>> {
    let (anchors, times, window, p) = malliavin_plan(spec)?;
    let density = spec.density()?;
    let c_gbar = poisson::gbar(&spec.model, &density, spec.model.theta_star, 2)?;
    let mut out = Vec::new();
    for &c in &spec.c_alphas {
        let mut cfg = spec.sim_config(c)?;
        cfg.snapshot_times = vec![spec.t_end];
        let samples = derivative_samples(&spec.model, &cfg, &anchors, &times, workers)?;
        let mut series = moment_scaling(&samples, p, 1, c_gbar, c, window)?;
        series.extend(moment_scaling(&samples, p, 2, c_gbar, c, window)?);
        out.push(MalliavinResult { c_alpha: c, c_gbar, series });
    }
    Ok(out)
}

pub fn render_malliavin(spec: &RunSpec, result: &MalliavinResult) -> String {
    let mut extra = vec![("c_alpha_run", result.c_alpha.to_string()), ("c_gbar", result.c_gbar.to_string())];
    for s in &result.series {
        if let Err(e) = &s.fit {
            extra.push(("fit_error", format!("order {} r1 {} r2 {}: {e}", s.order, s.r1, s.r2)));
        }
    }
    let mut out = header(spec, 0, &extra);
    out.push_str("order,p,r1,r2,t,moment,stderr,predicted_exponent,fitted_slope\n");
    for s in &result.series {
        let slope = s.fit.as_ref().map_or(f64::NAN, |f| f.slope);
        let stderr = s.series.stderr.as_deref().unwrap_or(&[]);
        for (k, (&t, &m)) in s.series.times.iter().zip(&s.series.values).enumerate() {
            let e = stderr.get(k).copied().unwrap_or(f64::NAN);
            let _ = writeln!(
                out,
                "{},{},{},{},{t},{m},{e},{},{slope}",
                s.order, s.p, s.r1, s.r2, s.predicted_exponent
            );
        }
    }
    out
}
