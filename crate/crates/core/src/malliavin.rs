//! Pathwise propagation of first- and second-order Malliavin derivatives of
//! `(X, θ)` and Monte Carlo estimates of their moments.
//!
//! `D_rX` is advanced with exact per-step exponentials `exp(f*_x Δ)`, so it
//! stays positive. `D_rθ` and `D²θ` are advanced with Euler steps that reuse
//! the Brownian increments stored on the path.

use crate::error::{Error, Result};
use crate::models::{DriftModel, GPartials};
use crate::parallel;
use crate::simulate::{grid_time, simulate_full_path, FullPath, SimConfig};
use crate::stats::{jackknife_mean_stderr, rate_fit, RateFit, RateSeries};

/// Anchor times for first-order derivatives and anchor pairs for second
/// order. Pairs are stored with `r₁ ≤ r₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub first: Vec<f64>,
    pub pairs: Vec<(f64, f64)>,
}

impl AnchorSet {
    pub fn new(first: Vec<f64>, pairs: Vec<(f64, f64)>) -> Self {
        let pairs = pairs
            .into_iter()
            .map(|(a, b)| if a <= b { (a, b) } else { (b, a) })
            .collect();
        Self { first, pairs }
    }

    /// `r ∈ {T/64, T/16, T/4}` with pairs `(r, r)` and `(r, 2r)`, each
    /// rounded to the nearest time `t0 + k·dt`.
    pub fn default_for(t_end: f64, t0: f64, dt: f64) -> Self {
        let snap = |t: f64| grid_time(t0, ((t - t0) / dt).round() as usize, dt);
        let first: Vec<f64> = [64.0, 16.0, 4.0].iter().map(|k| snap(t_end / k)).collect();
        let pairs = first.iter().flat_map(|&r| [(r, r), (r, snap(2.0 * r))]).collect();
        Self::new(first, pairs)
    }

    /// Every distinct anchor time, first-order and pair members alike.
    pub fn all_times(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.first.clone();
        for &(a, b) in &self.pairs {
            all.push(a);
            all.push(b);
        }
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }

    pub fn validate(&self, cfg: &SimConfig) -> Result<()> {
        for r in self.all_times() {
            if r < 1.0 {
                return Err(Error::Config(format!("malliavin.anchors: anchor {r} is below 1")));
            }
            match cfg.step_of(r) {
                Some(k) if k <= cfg.n_steps() => {}
                _ => {
                    return Err(Error::Config(format!(
                        "malliavin.anchors: anchor {r} is not on the dt = {} grid up to t_end",
                        cfg.dt
                    )))
                }
            }
        }
        Ok(())
    }
}

/// `D_rX_t` and `D_rθ_t` for `t ≥ r` on one path.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrder {
    pub path_seed: u64,
    pub anchor: usize,
    pub dx: Vec<f64>,
    pub dtheta: Vec<f64>,
}

impl FirstOrder {
    /// `D_rX` at step `k`; zero before the anchor.
    #[inline]
    pub fn dx_at(&self, k: usize) -> f64 {
        if k < self.anchor { 0.0 } else { self.dx[k - self.anchor] }
    }

    #[inline]
    pub fn dtheta_at(&self, k: usize) -> f64 {
        if k < self.anchor { 0.0 } else { self.dtheta[k - self.anchor] }
    }
}

/// `D²_{r₁,r₂}X_t` and `D²_{r₁,r₂}θ_t` for `t ≥ r₁ ∨ r₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrder {
    pub path_seed: u64,
    pub anchors: (usize, usize),
    pub d2x: Vec<f64>,
    pub d2theta: Vec<f64>,
}

impl SecondOrder {
    pub fn start(&self) -> usize {
        self.anchors.1
    }

    #[inline]
    pub fn d2x_at(&self, k: usize) -> f64 {
        if k < self.start() { 0.0 } else { self.d2x[k - self.start()] }
    }

    #[inline]
    pub fn d2theta_at(&self, k: usize) -> f64 {
        if k < self.start() { 0.0 } else { self.d2theta[k - self.start()] }
    }
}

fn anchor_step(path: &FullPath, r: f64) -> Result<usize> {
    if r < 1.0 {
        return Err(Error::Config(format!("malliavin.anchors: anchor {r} is below 1")));
    }
    path.step_of(r).ok_or_else(|| {
        Error::Config(format!("malliavin.anchors: anchor {r} is not on the dt = {} grid of the path", path.dt))
    })
}

#[inline]
fn g_at<M: DriftModel + ?Sized>(model: &M, x: f64, theta: f64) -> (crate::models::ModelPartials, GPartials) {
    let p = model.partials(x, theta);
    let g = GPartials::from_parts(&p, model.f_star(x), model.f_star_x(x), model.f_star_xx(x), model.sigma());
    (p, g)
}

/// First-order derivatives with respect to the Brownian path at time `r`.
///
/// Starts from `D_rX_r = σ`, `D_rθ_r = α_r σ⁻¹ f_θ(X_r, θ_r)` and steps
///
/// ```text
/// DX ← DX · exp(f*_x Δ)
/// Dθ ← Dθ + α[−g_θθ Dθ − g_xθ DX]Δ + α σ⁻¹[f_θθ Dθ + f_xθ DX]ΔW
/// ```
pub fn propagate_first<M: DriftModel + ?Sized>(path: &FullPath, model: &M, r: f64) -> Result<FirstOrder> {
    let a = anchor_step(path, r)?;
    let n = path.n_steps();
    let sigma = model.sigma();
    let dt = path.dt;
    let mut dx = Vec::with_capacity(n - a + 1);
    let mut dtheta = Vec::with_capacity(n - a + 1);
    let p0 = model.partials(path.x[a], path.theta[a]);
    let (mut cur_x, mut cur_th) = (sigma, path.lr.at(path.time_at(a)) * p0.f_theta / sigma);
    for k in a..n {
        dx.push(cur_x);
        dtheta.push(cur_th);
        let (x, th) = (path.x[k], path.theta[k]);
        let (p, g) = g_at(model, x, th);
        let alpha = path.lr.at(path.time_at(k));
        let drift = -g.g_thetatheta * cur_th - g.g_xtheta * cur_x;
        let diffusion = p.f_thetatheta * cur_th + p.f_xtheta * cur_x;
        cur_th += alpha * drift * dt + alpha / sigma * diffusion * path.dw[k];
        cur_x *= (model.f_star_x(x) * dt).exp();
    }
    dx.push(cur_x);
    dtheta.push(cur_th);
    if let Some(i) = dtheta.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!(
            "first-order derivative (r = {r}) is non-finite at t = {}",
            path.time_at(a + i)
        )));
    }
    Ok(FirstOrder { path_seed: path.seed, anchor: a, dx, dtheta })
}

/// Second-order derivatives for the anchors of two first-order trajectories
/// computed on the same path. The anchors are put in canonical order first,
/// so swapping the arguments gives bit-identical output.
pub fn propagate_second<M: DriftModel + ?Sized>(
    path: &FullPath,
    first_a: &FirstOrder,
    first_b: &FirstOrder,
    model: &M,
) -> Result<SecondOrder> {
    let n = path.n_steps();
    for f in [first_a, first_b] {
        if f.path_seed != path.seed || f.anchor + f.dx.len() != n + 1 || f.dtheta.len() != f.dx.len() {
            return Err(Error::Sequencing(format!(
                "first-order trajectory with anchor step {} was not computed on path {}",
                f.anchor, path.index
            )));
        }
    }
    let (lo, hi) = if first_a.anchor <= first_b.anchor { (first_a, first_b) } else { (first_b, first_a) };
    let (r1, r2) = (lo.anchor, hi.anchor);
    let sigma = model.sigma();
    let dt = path.dt;
    let lr = &path.lr;

    let p1 = model.partials(path.x[r1], path.theta[r1]);
    let p2 = model.partials(path.x[r2], path.theta[r2]);
    let (a1, a2) = (lr.at(path.time_at(r1)), lr.at(path.time_at(r2)));
    // γ(X_{r₁}, X_{r₂}, θ_{r₁}, θ_{r₂}); D_{r₂} of anything at r₁ < r₂ vanishes
    let gamma = (a2 * p2.f_xtheta * lo.dx_at(r2)
        + a1 * p1.f_xtheta * hi.dx_at(r1)
        + a2 * p2.f_thetatheta * lo.dtheta_at(r2)
        + a1 * p1.f_thetatheta * hi.dtheta_at(r1))
        / sigma;

    let mut d2x = Vec::with_capacity(n - r2 + 1);
    let mut d2theta = Vec::with_capacity(n - r2 + 1);
    let (mut cur_x, mut cur_th) = (0.0, gamma);
    for k in r2..n {
        d2x.push(cur_x);
        d2theta.push(cur_th);
        let (x, th) = (path.x[k], path.theta[k]);
        let (p, g) = g_at(model, x, th);
        let (dx1, dth1) = (lo.dx_at(k), lo.dtheta_at(k));
        let (dx2, dth2) = (hi.dx_at(k), hi.dtheta_at(k));
        let cross = dth1 * dx2 + dx1 * dth2;
        let gamma_g = -g.g_thetathetatheta * dth1 * dth2
            - g.g_thetathetax * cross
            - g.g_xxtheta * dx1 * dx2
            - g.g_xtheta * cur_x;
        let gamma_f = p.f_xthetatheta * cross
            + p.f_thetathetatheta * dth1 * dth2
            + p.f_xxtheta * dx1 * dx2
            + p.f_xtheta * cur_x;
        let alpha = lr.at(path.time_at(k));
        cur_th += alpha * (-g.g_thetatheta * cur_th + gamma_g) * dt
            + alpha / sigma * (p.f_thetatheta * cur_th + gamma_f) * path.dw[k];
        cur_x = cur_x * (model.f_star_x(x) * dt).exp() + model.f_star_xx(x) * dx1 * dx2 * dt;
    }
    d2x.push(cur_x);
    d2theta.push(cur_th);
    if let Some(i) = d2theta.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!(
            "second-order derivative is non-finite at t = {}",
            path.time_at(r2 + i)
        )));
    }
    Ok(SecondOrder { path_seed: path.seed, anchors: (r1, r2), d2x, d2theta })
}

/// Fewest paths accepted by [`derivative_samples`].
pub const MIN_MOMENT_PATHS: usize = 200;

/// Derivative values sampled at fixed times across an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeSamples {
    pub times: Vec<f64>,
    pub anchors: AnchorSet,
    /// `first[j][i][s]`: `D_{r_j}θ` of path `i` at `times[s]` (NaN before `r_j`).
    pub first: Vec<Vec<Vec<f64>>>,
    /// `second[j][i][s]`: `D²θ` for `anchors.pairs[j]`.
    pub second: Vec<Vec<Vec<f64>>>,
}
// first-order and second-order rows of one path
type PathSamples = (Vec<Vec<f64>>, Vec<Vec<f64>>);


/// Simulates `cfg.n_paths` paths one at a time at full resolution and
/// records `D_rθ` and `D²θ` at `times` for every anchor.
pub fn derivative_samples<M: DriftModel + ?Sized>(
    model: &M,
    cfg: &SimConfig,
    anchors: &AnchorSet,
    times: &[f64],
    workers: Option<usize>,
) -> Result<DerivativeSamples> {
    cfg.validate()?;
    anchors.validate(cfg)?;
    if cfg.n_paths < MIN_MOMENT_PATHS {
        return Err(Error::Config(format!(
            "n_paths: moment estimates need at least {MIN_MOMENT_PATHS} paths, got {}",
            cfg.n_paths
        )));
    }
    let steps: Vec<usize> = times
        .iter()
        .map(|&t| {
            cfg.step_of(t)
                .filter(|&k| k <= cfg.n_steps())
                .ok_or_else(|| Error::Config(format!("malliavin: sample time {t} is not on the dt grid")))
        })
        .collect::<Result<_>>()?;
    let firsts = anchors.all_times();
    let per_path = parallel::map_indexed(cfg.n_paths, workers, |i| -> Result<PathSamples> {
        let path = simulate_full_path(model, cfg, i)?;
        let computed: Vec<FirstOrder> = firsts
            .iter()
            .map(|&r| propagate_first(&path, model, r))
            .collect::<Result<_>>()?;
        let lookup = |r: f64| &computed[firsts.iter().position(|&a| a == r).expect("anchor listed")];
        let sample_first = |f: &FirstOrder| -> Vec<f64> {
            steps.iter().map(|&k| if k < f.anchor { f64::NAN } else { f.dtheta_at(k) }).collect()
        };
        let first = anchors.first.iter().map(|&r| sample_first(lookup(r))).collect();
        let mut second = Vec::with_capacity(anchors.pairs.len());
        for &(a, b) in &anchors.pairs {
            let s = propagate_second(&path, lookup(a), lookup(b), model)?;
            second.push(
                steps.iter().map(|&k| if k < s.start() { f64::NAN } else { s.d2theta_at(k) }).collect(),
            );
        }
        Ok((first, second))
    });
    let mut first = vec![Vec::with_capacity(cfg.n_paths); anchors.first.len()];
    let mut second = vec![Vec::with_capacity(cfg.n_paths); anchors.pairs.len()];
    for rec in per_path {
        let (f, s) = rec?;
        for (j, v) in f.into_iter().enumerate() {
            first[j].push(v);
        }
        for (j, v) in s.into_iter().enumerate() {
            second[j].push(v);
        }
    }
    Ok(DerivativeSamples { times: times.to_vec(), anchors: anchors.clone(), first, second })
}

/// `E[(Dθ_t)^{2p}]` over time for one anchor (or anchor pair).
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeries {
    pub order: u8,
    pub p: u32,
    pub r1: f64,
    pub r2: f64,
    pub series: RateSeries,
    /// `−2p · C_ḡ · C_α`.
    pub predicted_exponent: f64,
    pub fit: std::result::Result<RateFit, String>,
}

fn moment_series(
    samples: &[Vec<f64>],
    times: &[f64],
    p: u32,
    start: f64,
    window: (f64, f64),
) -> (RateSeries, std::result::Result<RateFit, String>) {
    let mut series = RateSeries { stderr: Some(Vec::new()), ..Default::default() };
    for (s, &t) in times.iter().enumerate() {
        if t <= start {
            continue;
        }
        let powers: Vec<f64> = samples.iter().map(|row| row[s].powi(2 * p as i32)).collect();
        let mean = powers.iter().sum::<f64>() / powers.len() as f64;
        series.times.push(t);
        series.values.push(mean);
        series.stderr.as_mut().expect("stderr").push(jackknife_mean_stderr(&powers));
    }
    let fit = rate_fit(&series, window).map_err(|e| e.to_string());
    (series, fit)
}

/// Moment table and log-log slope for every anchor of the requested order,
/// next to the predicted exponent `−2p C_ḡ C_α`. A failed fit is reported
/// in the series rather than aborting the table.
pub fn moment_scaling(
    samples: &DerivativeSamples,
    p: u32,
    order: u8,
    c_gbar: f64,
    c_alpha: f64,
    window: (f64, f64),
) -> Result<Vec<MomentSeries>> {
    if !(p == 1 || p == 2) {
        return Err(Error::Config(format!("malliavin.p: only 1 and 2 are supported, got {p}")));
    }
    let predicted_exponent = -2.0 * p as f64 * c_gbar * c_alpha;
    let out = match order {
        1 => samples
            .anchors
            .first
            .iter()
            .zip(&samples.first)
            .map(|(&r, rows)| {
                let (series, fit) = moment_series(rows, &samples.times, p, r, window);
                MomentSeries { order, p, r1: r, r2: r, series, predicted_exponent, fit }
            })
            .collect(),
        2 => samples
            .anchors
            .pairs
            .iter()
            .zip(&samples.second)
            .map(|(&(r1, r2), rows)| {
                let (series, fit) = moment_series(rows, &samples.times, p, r2, window);
                MomentSeries { order, p, r1, r2, series, predicted_exponent, fit }
            })
            .collect(),
        _ => return Err(Error::Config(format!("malliavin: order must be 1 or 2, got {order}"))),
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::BuiltinModel;

    fn path_for<M: DriftModel>(model: &M, cfg: &SimConfig) -> FullPath {
        simulate_full_path(model, cfg, 0).unwrap()
    }

    fn cfg(t_end: f64, dt: f64, c_alpha: f64, c0: f64) -> SimConfig {
        SimConfig {
            dt,
            t0: if c0 == 0.0 { 1.0 } else { 0.0 },
            t_end,
            c_alpha,
            c0,
            n_paths: 1,
            master_seed: 5,
            snapshot_times: vec![t_end],
            ..Default::default()
        }
    }

    #[test]
    fn ou_dx_is_exponential() {
        let c = 0.031;
        let m = BuiltinModel::ou(c);
        let path = path_for(&m, &SimConfig { c_alpha: 0.045, ..cfg(200.0, 0.1, 0.045, 1.0) });
        let r = 20.0;
        let f = propagate_first(&path, &m, r).unwrap();
        for (j, &v) in f.dx.iter().enumerate() {
            let t = path.time_at(f.anchor + j);
            assert!((v - (-c * (t - r)).exp()).abs() <= 1e-12);
        }
    }

    #[test]
    fn anchor_value_is_initial_condition() {
        let m = BuiltinModel::cubic(0.035);
        let path = path_for(&m, &cfg(50.0, 0.1, 0.016, 1.0));
        let f = propagate_first(&path, &m, 10.0).unwrap();
        let k = f.anchor;
        let expected = path.lr.at(10.0) * m.partials(path.x[k], path.theta[k]).f_theta;
        assert_eq!(f.dtheta[0], expected);
        assert_eq!(f.dx[0], 1.0);
    }

    #[test]
    fn x_independent_matches_power_law() {
        // Dθ' = −α_t Dθ  ⇒  Dθ_t = α_r (r/t)^{C_α} for C₀ = 0
        let m = BuiltinModel::x_independent(2.3);
        let c = cfg(1000.0, 0.01, 1.0, 0.0);
        let path = path_for(&m, &c);
        let f = propagate_first(&path, &m, 100.0).unwrap();
        let last = *f.dtheta.last().unwrap();
        assert!((last - 1e-3).abs() / 1e-3 < 0.01, "{last}");
    }

    #[test]
    fn off_grid_anchor_is_rejected() {
        let m = BuiltinModel::ou(0.1);
        let path = path_for(&m, &cfg(20.0, 0.1, 1.0, 1.0));
        assert!(matches!(propagate_first(&path, &m, 5.05), Err(Error::Config(_))));
        assert!(matches!(propagate_first(&path, &m, 0.5), Err(Error::Config(_))));
    }

    #[test]
    fn second_order_vanishes_for_linear_cases() {
        let m = BuiltinModel::ou(0.2);
        let path = path_for(&m, &cfg(40.0, 0.1, 0.2, 1.0));
        let a = propagate_first(&path, &m, 5.0).unwrap();
        let b = propagate_first(&path, &m, 8.0).unwrap();
        let s = propagate_second(&path, &a, &b, &m).unwrap();
        assert!(s.d2x.iter().all(|&v| v == 0.0));

        let m = BuiltinModel::x_independent(2.3);
        let path = path_for(&m, &cfg(40.0, 0.1, 1.0, 1.0));
        let a = propagate_first(&path, &m, 5.0).unwrap();
        let s = propagate_second(&path, &a, &a, &m).unwrap();
        assert!(s.d2theta.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cubic_gamma_on_the_diagonal() {
        let m = BuiltinModel::cubic(0.035);
        let path = path_for(&m, &cfg(60.0, 0.1, 0.016, 1.0));
        let r = 12.0;
        let f = propagate_first(&path, &m, r).unwrap();
        let s = propagate_second(&path, &f, &f, &m).unwrap();
        let k = f.anchor;
        // hand chain rule: 2α_r[f_xθ · 1 + f_θθ · Dθ_r] with f_xθ = −3x², f_θθ = 0
        let x = path.x[k];
        let expected = 2.0 * path.lr.at(r) * (-3.0 * x * x);
        assert!((s.d2theta[0] - expected).abs() <= 1e-15 * expected.abs().max(1e-300));
        assert_eq!(s.d2x[0], 0.0);
    }

    #[test]
    fn second_order_is_symmetric_in_anchors() {
        let m = BuiltinModel::cubic(0.035);
        let path = path_for(&m, &cfg(80.0, 0.1, 0.016, 1.0));
        let a = propagate_first(&path, &m, 10.0).unwrap();
        let b = propagate_first(&path, &m, 25.0).unwrap();
        let ab = propagate_second(&path, &a, &b, &m).unwrap();
        let ba = propagate_second(&path, &b, &a, &m).unwrap();
        assert_eq!(ab, ba);
        assert!(ab.d2x.iter().skip(1).any(|&v| v != 0.0));
    }

    #[test]
    fn dx_stays_positive_for_cubic() {
        let m = BuiltinModel::cubic(0.035);
        let path = path_for(&m, &cfg(300.0, 0.1, 0.016, 1.0));
        let f = propagate_first(&path, &m, 3.0).unwrap();
        assert!(f.dx.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn foreign_first_order_is_a_sequencing_error() {
        let m = BuiltinModel::ou(0.2);
        let c = cfg(30.0, 0.1, 0.2, 1.0);
        let p0 = simulate_full_path(&m, &SimConfig { n_paths: 2, ..c.clone() }, 0).unwrap();
        let p1 = simulate_full_path(&m, &SimConfig { n_paths: 2, ..c }, 1).unwrap();
        let a = propagate_first(&p0, &m, 5.0).unwrap();
        let b = propagate_first(&p1, &m, 5.0).unwrap();
        assert!(matches!(propagate_second(&p0, &a, &b, &m), Err(Error::Sequencing(_))));
    }

    #[test]
    fn x_independent_moment_slope_is_exact() {
        let m = BuiltinModel::x_independent(2.3);
        let c = SimConfig { n_paths: MIN_MOMENT_PATHS, ..cfg(1000.0, 0.1, 1.0, 0.0) };
        let anchors = AnchorSet::new(vec![100.0], vec![]);
        let times = vec![150.0, 200.0, 400.0, 800.0, 1000.0];
        let samples = derivative_samples(&m, &c, &anchors, &times, None).unwrap();
        let table = moment_scaling(&samples, 1, 1, 1.0, 1.0, (100.0, 1000.0)).unwrap();
        let slope = table[0].fit.as_ref().unwrap().slope;
        // deterministic: every path carries the same Dθ; Euler bias only
        assert!((slope + 2.0).abs() < 2e-3, "{slope}");
        assert_eq!(table[0].predicted_exponent, -2.0);
        assert!(table[0].series.stderr.as_ref().unwrap().iter().all(|&s| s < 1e-15));
    }

    #[test]
    fn single_time_fit_fails_but_table_is_kept() {
        let m = BuiltinModel::x_independent(2.3);
        let c = SimConfig { n_paths: MIN_MOMENT_PATHS, ..cfg(200.0, 0.1, 1.0, 1.0) };
        let anchors = AnchorSet::new(vec![100.0], vec![(100.0, 100.0)]);
        let samples = derivative_samples(&m, &c, &anchors, &[200.0], Some(2)).unwrap();
        let table = moment_scaling(&samples, 1, 1, 1.0, 1.0, (0.0, 1e9)).unwrap();
        assert_eq!(table[0].series.values.len(), 1);
        assert!(table[0].fit.is_err());
        assert!(moment_scaling(&samples, 3, 1, 1.0, 1.0, (0.0, 1e9)).is_err());
    }

    #[test]
    fn too_few_paths_is_a_config_error() {
        let m = BuiltinModel::ou(0.2);
        let c = cfg(30.0, 0.1, 0.2, 1.0);
        let anchors = AnchorSet::new(vec![5.0], vec![]);
        assert!(matches!(derivative_samples(&m, &c, &anchors, &[10.0], None), Err(Error::Config(_))));
    }

    #[test]
    fn default_anchor_pairs_are_canonical() {
        let a = AnchorSet::new(vec![], vec![(20.0, 10.0)]);
        assert_eq!(a.pairs, vec![(10.0, 20.0)]);
        let d = AnchorSet::default_for(6400.0, 0.0, 0.1);
        assert_eq!(d.first, vec![100.0, 400.0, 1600.0]);
        assert_eq!(d.pairs[1], (100.0, 200.0));
        let c = cfg(7000.0, 0.1, 0.045, 1.0);
        let d = AnchorSet::default_for(7000.0, 0.0, 0.1);
        assert!((d.first[0] - 109.4).abs() < 1e-9);
        d.validate(&c).unwrap();
    }
}
