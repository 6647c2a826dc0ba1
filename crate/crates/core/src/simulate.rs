//! Euler–Maruyama integration of the coupled data/parameter system
//!
//! ```text
//! dX_t = f*(X_t) dt + σ dW_t
//! dθ_t = α_t f_θ(X_t, θ_t) σ⁻² [dX_t − f(X_t, θ_t) dt],   α_t = C_α / (C₀ + t)
//! ```
//!
//! Both updates consume the same Brownian increment. Paths are simulated
//! independently from per-path substreams, so ensembles are reproducible for
//! any worker count.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::models::DriftModel;
use crate::parallel;

/// Decaying learning rate `α_t = C_α / (C₀ + t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRate {
    pub c_alpha: f64,
    pub c0: f64,
}

impl LearningRate {
    pub fn new(c_alpha: f64, c0: f64) -> Self {
        Self { c_alpha, c0 }
    }

    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        self.c_alpha / (self.c0 + t)
    }
}

const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    /// Start time of the simulation; `0` unless `c0 = 0`.
    pub t0: f64,
    pub t_end: f64,
    pub c_alpha: f64,
    pub c0: f64,
    pub x0: f64,
    pub theta0: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    pub snapshot_times: Vec<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            t0: 0.0,
            t_end: 100.0,
            c_alpha: 1.0,
            c0: 1.0,
            x0: 0.0,
            theta0: 0.0,
            n_paths: 100,
            master_seed: 0,
            snapshot_times: vec![100.0],
        }
    }
}

impl SimConfig {
    pub fn learning_rate(&self) -> LearningRate {
        LearningRate::new(self.c_alpha, self.c0)
    }

    pub fn time_at(&self, step: usize) -> f64 {
        grid_time(self.t0, step, self.dt)
    }

    /// Index of the grid step at time `t`, if `t` lies on the grid.
    pub fn step_of(&self, t: f64) -> Option<usize> {
        let k = (t - self.t0) / self.dt;
        let r = k.round();
        if r < 0.0 || (k - r).abs() > GRID_TOL * k.abs().max(1.0) {
            None
        } else {
            Some(r as usize)
        }
    }

    pub fn n_steps(&self) -> usize {
        self.step_of(self.t_end).unwrap_or(0)
    }

    /// Validates the configuration and returns the step index of every
    /// snapshot time.
    pub fn validate(&self) -> Result<Vec<usize>> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name}: must be positive and finite, got {v}")))
            }
        };
        positive("dt", self.dt)?;
        positive("c_alpha", self.c_alpha)?;
        if !(self.c0 >= 0.0 && self.c0.is_finite()) {
            return Err(Error::Config(format!("c0: must be nonnegative, got {}", self.c0)));
        }
        if !(self.t0 >= 0.0 && self.c0 + self.t0 > 0.0) {
            return Err(Error::Config(format!(
                "c0: learning rate is singular at the start time (c0 = {}, t0 = {})",
                self.c0, self.t0
            )));
        }
        if !(self.t_end > self.t0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end: must exceed the start time, got {}", self.t_end)));
        }
        if self.step_of(self.t_end).is_none() {
            return Err(Error::Config(format!("t_end: {} is not a multiple of dt = {}", self.t_end, self.dt)));
        }
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths: must be at least 1".into()));
        }
        if !(self.x0.is_finite() && self.theta0.is_finite()) {
            return Err(Error::Config("x0/theta0: must be finite".into()));
        }
        if self.snapshot_times.is_empty() {
            return Err(Error::Config("snapshots: at least one snapshot time is required".into()));
        }
        let mut steps = Vec::with_capacity(self.snapshot_times.len());
        let mut prev: Option<f64> = None;
        for &t in &self.snapshot_times {
            if !(t > self.t0 && t <= self.t_end * (1.0 + GRID_TOL)) {
                return Err(Error::Config(format!(
                    "snapshots: time {t} outside ({}, {}]",
                    self.t0, self.t_end
                )));
            }
            if let Some(p) = prev {
                if t <= p {
                    return Err(Error::Config(format!("snapshots: times must be strictly increasing ({p} then {t})")));
                }
                if self.dt > (t - p) * (1.0 + GRID_TOL) {
                    return Err(Error::Config(format!(
                        "dt: {} exceeds the snapshot gap {}",
                        self.dt,
                        t - p
                    )));
                }
            }
            let step = self.step_of(t).ok_or_else(|| {
                Error::Config(format!("snapshots: time {t} is not on the dt = {} grid", self.dt))
            })?;
            steps.push(step);
            prev = Some(t);
        }
        Ok(steps)
    }
}

/// `t0 + k·dt`, evaluated as `t0 + k/(1/dt)` when `1/dt` is an integer so
/// that decimal step sizes give exact decimal times.
pub fn grid_time(t0: f64, k: usize, dt: f64) -> f64 {
    let inv = 1.0 / dt;
    if (inv - inv.round()).abs() < 1e-9 && inv.round() >= 1.0 {
        t0 + k as f64 / inv.round()
    } else {
        t0 + k as f64 * dt
    }
}

/// `n` log-spaced times in `[t_min, t_max]`, rounded onto the `dt` grid
/// starting at `t0`.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn log_schedule(n: usize, t_min: f64, t_max: f64, t0: f64, dt: f64) -> Result<Vec<f64>> {
    if n < 2 || !(t_min > t0 && t_min > 0.0 && t_max > t_min) || !(dt > 0.0) {
        return Err(Error::Config(format!(
            "snapshots: invalid log schedule n = {n}, range [{t_min}, {t_max}]"
        )));
    }
    let (a, b) = (t_min.ln(), t_max.ln());
    let mut out: Vec<f64> = Vec::with_capacity(n);
    for i in 0..n {
        let t = (a + (b - a) * i as f64 / (n - 1) as f64).exp();
        let k = ((t - t0) / dt).round().max(1.0);
        let snapped = grid_time(t0, k as usize, dt);
        if out.last().is_some_and(|&p| snapped <= p) {
            return Err(Error::Config(format!(
                "snapshots: log schedule with {n} points collapses on the dt = {dt} grid"
            )));
        }
        out.push(snapped);
    }
    Ok(out)
}

/// One Euler–Maruyama step from time `t`. Without a data process `x` is
/// carried unchanged and the increment of `X` is formed virtually, which
/// reduces to `dθ = −α g_θ dt + α σ⁻¹ f_θ dW`.
#[inline]
pub fn step<M: DriftModel + ?Sized>(
    model: &M,
    lr: &LearningRate,
    x: f64,
    theta: f64,
    t: f64,
    dt: f64,
    dw: f64,
) -> (f64, f64) {
    let sigma = model.sigma();
    let dx = model.f_star(x) * dt + sigma * dw;
    let p = model.partials(x, theta);
    let theta_next = theta + lr.at(t) * p.f_theta / (sigma * sigma) * (dx - p.f * dt);
    let x_next = if model.has_x_process() { x + dx } else { x };
    (x_next, theta_next)
}

/// Every state and increment of one path, needed for Malliavin propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct FullPath {
    pub index: usize,
    pub seed: u64,
    pub t0: f64,
    pub dt: f64,
    pub lr: LearningRate,
    /// `x[k]`, `theta[k]` at time `t0 + k·dt`, `k = 0..=n_steps`.
    pub x: Vec<f64>,
    pub theta: Vec<f64>,
    /// `dw[k]` drives the step from `k` to `k + 1`.
    pub dw: Vec<f64>,
}

impl FullPath {
    pub fn n_steps(&self) -> usize {
        self.dw.len()
    }

    pub fn time_at(&self, step: usize) -> f64 {
        grid_time(self.t0, step, self.dt)
    }

    pub fn step_of(&self, t: f64) -> Option<usize> {
        let k = (t - self.t0) / self.dt;
        let r = k.round();
        if r < 0.0 || (k - r).abs() > GRID_TOL * k.abs().max(1.0) || r as usize > self.n_steps() {
            None
        } else {
            Some(r as usize)
        }
    }
}

/// Extra knobs for [`run_ensemble_with`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub workers: Option<usize>,
    /// Forces every Brownian increment to zero.
    pub zero_noise: bool,
    /// Paths whose full trajectories are kept.
    pub full_paths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub snapshot_times: Vec<f64>,
    /// `theta[s][i]`: parameter of path `i` at snapshot `s`.
    pub theta: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    pub seeds: Vec<u64>,
    /// Paths that produced a non-finite value; excluded from statistics.
    pub flagged: Vec<bool>,
    pub full: Vec<FullPath>,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.seeds.len()
    }

    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }

    pub fn snapshot_index(&self, t: f64) -> Option<usize> {
        self.snapshot_times
            .iter()
            .position(|&s| (s - t).abs() <= GRID_TOL * t.abs().max(1.0))
    }

    /// Parameter values of the unflagged paths at snapshot `s`, in index order.
    pub fn theta_at(&self, s: usize) -> Vec<f64> {
        self.theta[s]
            .iter()
            .zip(&self.flagged)
            .filter(|(_, &f)| !f)
            .map(|(&v, _)| v)
            .collect()
    }
}

struct PathRecord {
    theta: Vec<f64>,
    x: Vec<f64>,
    seed: u64,
    flagged: bool,
    full: Option<FullPath>,
}

fn simulate_path<M: DriftModel + ?Sized>(
    model: &M,
    cfg: &SimConfig,
    snapshot_steps: &[usize],
    index: usize,
    zero_noise: bool,
    keep_full: bool,
) -> PathRecord {
    let seed = parallel::substream_seed(cfg.master_seed, index as u64);
    let mut rng = parallel::substream_rng(cfg.master_seed, index as u64);
    let lr = cfg.learning_rate();
    let n_steps = cfg.n_steps();
    let sqrt_dt = cfg.dt.sqrt();
    let mut theta_snap = Vec::with_capacity(snapshot_steps.len());
    let mut x_snap = Vec::with_capacity(snapshot_steps.len());
    let mut full = keep_full.then(|| FullPath {
        index,
        seed,
        t0: cfg.t0,
        dt: cfg.dt,
        lr,
        x: Vec::with_capacity(n_steps + 1),
        theta: Vec::with_capacity(n_steps + 1),
        dw: Vec::with_capacity(n_steps),
    });
    let (mut x, mut theta) = (cfg.x0, cfg.theta0);
    let mut next = 0;
    let mut flagged = false;
    for k in 0..=n_steps {
        if let Some(fp) = full.as_mut() {
            fp.x.push(x);
            fp.theta.push(theta);
        }
        if next < snapshot_steps.len() && snapshot_steps[next] == k {
            theta_snap.push(theta);
            x_snap.push(x);
            next += 1;
        }
        if k == n_steps {
            break;
        }
        let z: f64 = rng.sample(StandardNormal);
        let dw = if zero_noise { 0.0 } else { sqrt_dt * z };
        if let Some(fp) = full.as_mut() {
            fp.dw.push(dw);
        }
        (x, theta) = step(model, &lr, x, theta, cfg.time_at(k), cfg.dt, dw);
        if !(x.is_finite() && theta.is_finite()) {
            flagged = true;
            break;
        }
    }
    theta_snap.resize(snapshot_steps.len(), f64::NAN);
    x_snap.resize(snapshot_steps.len(), f64::NAN);
    PathRecord { theta: theta_snap, x: x_snap, seed, flagged, full }
}

/// Simulates a single path at full resolution.
pub fn simulate_full_path<M: DriftModel + ?Sized>(
    model: &M,
    cfg: &SimConfig,
    index: usize,
) -> Result<FullPath> {
    let steps = cfg.validate()?;
    let rec = simulate_path(model, cfg, &steps, index, false, true);
    if rec.flagged {
        return Err(Error::Domain(format!("path {index} produced a non-finite value")));
    }
    Ok(rec.full.expect("full path requested"))
}

pub fn run_ensemble<M: DriftModel + ?Sized>(model: &M, cfg: &SimConfig) -> Result<PathEnsemble> {
    run_ensemble_with(model, cfg, &RunOptions::default())
}

pub fn run_ensemble_with<M: DriftModel + ?Sized>(
    model: &M,
    cfg: &SimConfig,
    opts: &RunOptions,
) -> Result<PathEnsemble> {
    let steps = cfg.validate()?;
    if let Some(&bad) = opts.full_paths.iter().find(|&&i| i >= cfg.n_paths) {
        return Err(Error::Config(format!("full path index {bad} exceeds n_paths = {}", cfg.n_paths)));
    }
    let records = parallel::map_indexed(cfg.n_paths, opts.workers, |i| {
        simulate_path(model, cfg, &steps, i, opts.zero_noise, opts.full_paths.contains(&i))
    });
    let n_snap = steps.len();
    let mut theta = vec![Vec::with_capacity(cfg.n_paths); n_snap];
    let mut x = vec![Vec::with_capacity(cfg.n_paths); n_snap];
    let mut seeds = Vec::with_capacity(cfg.n_paths);
    let mut flagged = Vec::with_capacity(cfg.n_paths);
    let mut full = Vec::new();
    for rec in records {
        for s in 0..n_snap {
            theta[s].push(rec.theta[s]);
            x[s].push(rec.x[s]);
        }
        seeds.push(rec.seed);
        flagged.push(rec.flagged);
        full.extend(rec.full);
    }
    Ok(PathEnsemble {
        snapshot_times: cfg.snapshot_times.clone(),
        theta,
        x,
        seeds,
        flagged,
        full,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::BuiltinModel;

    #[test]
    fn deterministic_ou_step() {
        let m = BuiltinModel::ou(1.0);
        let lr = LearningRate::new(1.0, 1.0);
        let (x, theta) = step(&m, &lr, 1.0, 1.0, 0.0, 0.1, 0.0);
        assert!((x - 0.9).abs() < 1e-15);
        // θ = c*: f ≡ f*, no noise, no update
        assert_eq!(theta, 1.0);
    }

    #[test]
    fn x_independent_step_examples() {
        let m = BuiltinModel::x_independent(2.3);
        let lr = LearningRate::new(1.0, 1.0);
        let (_, theta) = step(&m, &lr, 0.0, 0.0, 0.0, 0.1, 0.0);
        assert!((theta - 0.23).abs() < 1e-15);
        let (x, theta) = step(&m, &lr, 0.0, 0.0, 0.0, 0.1, 0.2);
        assert!((theta - 0.43).abs() < 1e-15);
        assert_eq!(x, 0.0);
    }

    #[test]
    fn validation_rejects_off_grid_snapshots() {
        let cfg = SimConfig { snapshot_times: vec![10.05, 100.0], ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = SimConfig { snapshot_times: vec![50.0, 40.0], ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = SimConfig { c0: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = SimConfig { c0: 0.0, t0: 1.0, ..Default::default() };
        assert!(cfg.validate().is_ok());
        let cfg = SimConfig { dt: 1.0, snapshot_times: vec![10.0, 10.5, 100.0], ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn log_schedule_expansion() {
        let s = log_schedule(40, 10.0, 5000.0, 0.0, 0.1).unwrap();
        assert_eq!(s.len(), 40);
        assert!((s[0] - 10.0).abs() < 1e-9 && (s[39] - 5000.0).abs() < 1e-9);
        let cfg = SimConfig { t_end: 5000.0, snapshot_times: s, ..Default::default() };
        assert!(cfg.validate().is_ok());
        assert!(log_schedule(100, 0.1, 0.5, 0.0, 0.1).is_err());
    }

    #[test]
    fn zero_noise_paths_follow_deterministic_recursion() {
        let m = BuiltinModel::ou(1.0);
        let cfg = SimConfig {
            dt: 0.01,
            t_end: 1.0,
            x0: 1.0,
            theta0: 0.5,
            n_paths: 4,
            snapshot_times: vec![0.5, 1.0],
            ..Default::default()
        };
        let opts = RunOptions { zero_noise: true, ..Default::default() };
        let e = run_ensemble_with(&m, &cfg, &opts).unwrap();
        let (mut x, mut th) = (1.0, 0.5);
        let lr = cfg.learning_rate();
        for k in 0..100 {
            (x, th) = step(&m, &lr, x, th, cfg.time_at(k), 0.01, 0.0);
        }
        for i in 0..4 {
            assert_eq!(e.x[1][i], x);
            assert_eq!(e.theta[1][i], th);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let m = BuiltinModel::cubic(0.035);
        let cfg = SimConfig {
            dt: 0.1,
            t_end: 50.0,
            c_alpha: 0.016,
            n_paths: 37,
            master_seed: 11,
            snapshot_times: vec![10.0, 50.0],
            ..Default::default()
        };
        let a = run_ensemble_with(&m, &cfg, &RunOptions { workers: Some(1), ..Default::default() }).unwrap();
        let b = run_ensemble_with(&m, &cfg, &RunOptions { workers: Some(8), ..Default::default() }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn paths_do_not_depend_on_ensemble_size() {
        let m = BuiltinModel::ou(0.5);
        let small = SimConfig { n_paths: 3, t_end: 5.0, snapshot_times: vec![5.0], ..Default::default() };
        let large = SimConfig { n_paths: 10, ..small.clone() };
        let a = run_ensemble(&m, &small).unwrap();
        let b = run_ensemble(&m, &large).unwrap();
        assert_eq!(a.theta[0][..], b.theta[0][..3]);
    }

    #[test]
    fn non_finite_paths_are_flagged() {
        // explicit Euler on the cubic drift blows up for a huge step
        let m = BuiltinModel::cubic(1.0);
        let cfg = SimConfig {
            dt: 5.0,
            t_end: 100.0,
            x0: 3.0,
            n_paths: 3,
            snapshot_times: vec![100.0],
            ..Default::default()
        };
        let e = run_ensemble(&m, &cfg).unwrap();
        assert_eq!(e.flagged_count(), 3);
        assert!(e.theta_at(0).is_empty());
        assert!(e.theta[0][0].is_nan());
    }

    #[test]
    fn full_path_matches_snapshots() {
        let m = BuiltinModel::ou(0.2);
        let cfg = SimConfig { n_paths: 5, t_end: 20.0, snapshot_times: vec![10.0, 20.0], ..Default::default() };
        let opts = RunOptions { full_paths: vec![2], ..Default::default() };
        let e = run_ensemble_with(&m, &cfg, &opts).unwrap();
        let fp = &e.full[0];
        assert_eq!(fp.index, 2);
        assert_eq!(fp.theta[100], e.theta[0][2]);
        assert_eq!(fp.x[200], e.x[1][2]);
        assert_eq!(simulate_full_path(&m, &cfg, 2).unwrap(), *fp);
    }
}
