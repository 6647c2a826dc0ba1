//! Drift models: the true drift `f*` of the data diffusion and the
//! parametric family `f(x, θ)` fitted by the stochastic gradient flow.
//!
//! The distance function is `g(x, θ) = ½σ⁻²(f(x, θ) − f*(x))²`. Its partials
//! are always derived here by the chain rule from the partials of `f` and
//! `f*`; models never supply them directly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{self, UniformGrid};

/// Partials of the parametric model `f(x, θ)` at a single point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ModelPartials {
    pub f: f64,
    pub f_theta: f64,
    pub f_thetatheta: f64,
    pub f_thetathetatheta: f64,
    pub f_x: f64,
    pub f_xx: f64,
    pub f_xtheta: f64,
    pub f_xthetatheta: f64,
    pub f_xxtheta: f64,
}

impl ModelPartials {
    fn named(&self) -> [(&'static str, f64); 9] {
        [
            ("f", self.f),
            ("f_theta", self.f_theta),
            ("f_thetatheta", self.f_thetatheta),
            ("f_thetathetatheta", self.f_thetathetatheta),
            ("f_x", self.f_x),
            ("f_xx", self.f_xx),
            ("f_xtheta", self.f_xtheta),
            ("f_xthetatheta", self.f_xthetatheta),
            ("f_xxtheta", self.f_xxtheta),
        ]
    }
}

/// A drift model pair `(f*, f)` with the diffusion coefficient `σ`.
pub trait DriftModel: Sync {
    fn sigma(&self) -> f64;

    /// `false` when the model does not depend on `x` and the data process is
    /// not simulated.
    fn has_x_process(&self) -> bool {
        true
    }

    fn f_star(&self, x: f64) -> f64;
    fn f_star_x(&self, x: f64) -> f64;
    fn f_star_xx(&self, x: f64) -> f64;

    fn partials(&self, x: f64, theta: f64) -> ModelPartials;
}

/// Partials of the distance function `g`. Mixed partials are symmetric, so
/// `g_xθ = g_θx` and `g_θθx = g_θxθ` are stored once.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GPartials {
    pub g_theta: f64,
    pub g_thetatheta: f64,
    pub g_thetathetatheta: f64,
    pub g_xtheta: f64,
    pub g_thetathetax: f64,
    pub g_xxtheta: f64,
}

impl GPartials {
    /// Chain rule without finiteness checks, for inner loops.
    #[inline]
    pub fn from_parts(p: &ModelPartials, f_star: f64, f_star_x: f64, f_star_xx: f64, sigma: f64) -> Self {
        let s2 = 1.0 / (sigma * sigma);
        let r = p.f - f_star;
        let r_x = p.f_x - f_star_x;
        let r_xx = p.f_xx - f_star_xx;
        Self {
            g_theta: s2 * r * p.f_theta,
            g_thetatheta: s2 * (p.f_theta * p.f_theta + r * p.f_thetatheta),
            g_thetathetatheta: s2 * (3.0 * p.f_theta * p.f_thetatheta + r * p.f_thetathetatheta),
            g_xtheta: s2 * (r_x * p.f_theta + r * p.f_xtheta),
            g_thetathetax: s2
                * (2.0 * p.f_theta * p.f_xtheta + r_x * p.f_thetatheta + r * p.f_xthetatheta),
            g_xxtheta: s2
                * (r_xx * p.f_theta + 2.0 * r_x * p.f_xtheta + r * p.f_xxtheta),
        }
    }

    fn named(&self) -> [(&'static str, f64); 6] {
        [
            ("g_theta", self.g_theta),
            ("g_thetatheta", self.g_thetatheta),
            ("g_thetathetatheta", self.g_thetathetatheta),
            ("g_xtheta", self.g_xtheta),
            ("g_thetathetax", self.g_thetathetax),
            ("g_xxtheta", self.g_xxtheta),
        ]
    }
}

/// `g(x, θ) = ½σ⁻²(f − f*)²`.
pub fn g_value<M: DriftModel + ?Sized>(model: &M, x: f64, theta: f64) -> f64 {
    let r = model.partials(x, theta).f - model.f_star(x);
    0.5 * r * r / (model.sigma() * model.sigma())
}

/// All `g`-partials at `(x, θ)`, failing on the first non-finite input or
/// output partial.
pub fn g_partials<M: DriftModel + ?Sized>(model: &M, x: f64, theta: f64) -> Result<GPartials> {
    let p = model.partials(x, theta);
    for (name, v) in p.named() {
        check_finite(name, v, x, theta)?;
    }
    let (fs, fsx, fsxx) = (model.f_star(x), model.f_star_x(x), model.f_star_xx(x));
    check_finite("f_star", fs, x, theta)?;
    check_finite("f_star_x", fsx, x, theta)?;
    check_finite("f_star_xx", fsxx, x, theta)?;
    let g = GPartials::from_parts(&p, fs, fsx, fsxx, model.sigma());
    for (name, v) in g.named() {
        check_finite(name, v, x, theta)?;
    }
    Ok(g)
}

fn check_finite(partial: &'static str, v: f64, x: f64, theta: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { partial, x, theta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `f(x, θ) = θ`, `f* = θ*`; no data process.
    XIndependent,
    /// Ornstein–Uhlenbeck: `f(x, θ) = −θx`.
    Ou,
    /// `f(x, θ) = −θx³`.
    Cubic,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::XIndependent => "x_independent",
            ModelKind::Ou => "ou",
            ModelKind::Cubic => "cubic",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x_independent" => Ok(ModelKind::XIndependent),
            "ou" => Ok(ModelKind::Ou),
            "cubic" => Ok(ModelKind::Cubic),
            other => Err(Error::Config(format!(
                "model: unknown model {other:?} (expected x_independent, ou or cubic)"
            ))),
        }
    }
}

/// One of the three well-specified example models, with `f* = f(·, θ*)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuiltinModel {
    pub kind: ModelKind,
    pub theta_star: f64,
    pub sigma: f64,
}

impl BuiltinModel {
    pub fn new(kind: ModelKind, theta_star: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("sigma: must be positive, got {sigma}")));
        }
        if !theta_star.is_finite() {
            return Err(Error::Config("theta_star: must be finite".into()));
        }
        if matches!(kind, ModelKind::Ou | ModelKind::Cubic) && theta_star <= 0.0 {
            return Err(Error::Config(format!(
                "theta_star: must be positive for the {kind} model (ergodicity), got {theta_star}"
            )));
        }
        Ok(Self { kind, theta_star, sigma })
    }

    pub fn x_independent(theta_star: f64) -> Self {
        Self { kind: ModelKind::XIndependent, theta_star, sigma: 1.0 }
    }

    pub fn ou(theta_star: f64) -> Self {
        Self { kind: ModelKind::Ou, theta_star, sigma: 1.0 }
    }

    pub fn cubic(theta_star: f64) -> Self {
        Self { kind: ModelKind::Cubic, theta_star, sigma: 1.0 }
    }
}

impl DriftModel for BuiltinModel {
    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn has_x_process(&self) -> bool {
        self.kind != ModelKind::XIndependent
    }

    fn f_star(&self, x: f64) -> f64 {
        match self.kind {
            ModelKind::XIndependent => self.theta_star,
            ModelKind::Ou => -self.theta_star * x,
            ModelKind::Cubic => -self.theta_star * x * x * x,
        }
    }

    fn f_star_x(&self, x: f64) -> f64 {
        match self.kind {
            ModelKind::XIndependent => 0.0,
            ModelKind::Ou => -self.theta_star,
            ModelKind::Cubic => -3.0 * self.theta_star * x * x,
        }
    }

    fn f_star_xx(&self, x: f64) -> f64 {
        match self.kind {
            ModelKind::XIndependent | ModelKind::Ou => 0.0,
            ModelKind::Cubic => -6.0 * self.theta_star * x,
        }
    }

    fn partials(&self, x: f64, theta: f64) -> ModelPartials {
        match self.kind {
            ModelKind::XIndependent => ModelPartials { f: theta, f_theta: 1.0, ..Default::default() },
            ModelKind::Ou => ModelPartials {
                f: -theta * x,
                f_theta: -x,
                f_x: -theta,
                f_xtheta: -1.0,
                ..Default::default()
            },
            ModelKind::Cubic => {
                let x2 = x * x;
                ModelPartials {
                    f: -theta * x2 * x,
                    f_theta: -x2 * x,
                    f_x: -3.0 * theta * x2,
                    f_xx: -6.0 * theta * x,
                    f_xtheta: -3.0 * x2,
                    f_xxtheta: -6.0 * x,
                    ..Default::default()
                }
            }
        }
    }
}

/// Outcome of probing a model on a grid of `x` values.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    /// `max f*_x` over the probe points. The ergodicity assumption asks for a
    /// strictly negative value.
    pub max_f_star_x: f64,
    pub warnings: Vec<String>,
}

/// Checks that every partial is finite on `xs` at parameter `theta` and
/// reports (without failing) where `f*_x` is not bounded away from zero.
pub fn probe<M: DriftModel + ?Sized>(model: &M, xs: &[f64], theta: f64) -> Result<ProbeReport> {
    let mut max_f_star_x = f64::NEG_INFINITY;
    for &x in xs {
        g_partials(model, x, theta)?;
        max_f_star_x = max_f_star_x.max(model.f_star_x(x));
    }
    let mut warnings = Vec::new();
    if model.has_x_process() && max_f_star_x >= 0.0 {
        warnings.push(format!(
            "ergodicity: f*_x reaches {max_f_star_x} on the probe grid; no uniform negative bound"
        ));
    }
    Ok(ProbeReport { max_f_star_x, warnings })
}

/// Tail ratio above which the truncated density is rejected.
pub const TRUNCATION_LIMIT: f64 = 1e-12;

/// Default number of quadrature nodes, `2¹⁴ + 1`.
pub const DEFAULT_DENSITY_POINTS: usize = (1 << 14) + 1;

/// Normalized invariant density of the data process tabulated on a grid,
/// together with the quadrature weights of `μ`: `∫φ dμ ≈ Σ wᵢ φ(xᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    pub grid: Option<UniformGrid>,
    pub x: Vec<f64>,
    pub m: Vec<f64>,
    /// `ln m`, finite even where `m` underflows.
    pub log_m: Vec<f64>,
    pub weights: Vec<f64>,
    /// `max(m(−L), m(L)) / max m`.
    pub tail_ratio: f64,
    /// Estimated mass of `μ` outside the grid.
    pub tail_mass: f64,
}

impl DensityTable {
    /// Point mass at the origin, used for models without a data process.
    pub fn dirac() -> Self {
        Self {
            grid: None,
            x: vec![0.0],
            m: vec![1.0],
            log_m: vec![0.0],
            weights: vec![1.0],
            tail_ratio: 0.0,
            tail_mass: 0.0,
        }
    }

    pub fn is_dirac(&self) -> bool {
        self.grid.is_none()
    }

    /// `∫ φ dμ`.
    pub fn expect(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.weights.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub fn expect_fn(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.weights.iter().zip(&self.x).map(|(w, &x)| w * f(x)).sum()
    }

    /// Density table with the default truncation rule: the half-width starts
    /// at eight stationary standard deviations and grows until the tail
    /// criterion holds. Models without a data process get a point mass.
    pub fn auto<M: DriftModel + ?Sized>(model: &M, n_points: usize) -> Result<Self> {
        Self::auto_scaled(model, n_points, 8.0)
    }

    /// Like [`DensityTable::auto`] with `L = widths · sd`.
    pub fn auto_scaled<M: DriftModel + ?Sized>(
        model: &M,
        n_points: usize,
        widths: f64,
    ) -> Result<Self> {
        if !model.has_x_process() {
            return Ok(Self::dirac());
        }
        let sd = stationary_sd(model)?;
        let mut half_width = widths * sd;
        for _ in 0..64 {
            match invariant_density(model, UniformGrid::symmetric(half_width, n_points)?) {
                Err(Error::Truncation { .. }) => half_width *= 1.25,
                other => return other,
            }
        }
        Err(Error::Divergence("tail criterion never satisfied".into()))
    }
}

/// Rough stationary standard deviation, from a coarse density on a domain
/// grown until the tails have decayed.
fn stationary_sd<M: DriftModel + ?Sized>(model: &M) -> Result<f64> {
    let mut half_width = 1.0;
    while half_width < 1e6 {
        match invariant_density(model, UniformGrid::symmetric(half_width, 2049)?) {
            Ok(d) => {
                let mean = d.expect(&d.x);
                let var = d.expect_fn(|x| (x - mean) * (x - mean));
                return Ok(var.sqrt());
            }
            Err(Error::Truncation { .. }) => half_width *= 2.0,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Divergence(format!(
        "density has not decayed by |x| = {half_width}"
    )))
}

/// Invariant density `m(x) ∝ exp((2/σ²)∫₀ˣ f*(y) dy)` on a symmetric grid.
pub fn invariant_density<M: DriftModel + ?Sized>(model: &M, grid: UniformGrid) -> Result<DensityTable> {
    if !model.has_x_process() {
        return Err(Error::Domain("model has no data process".into()));
    }
    if !grid.is_symmetric() || grid.n.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "quadrature: density grid must be symmetric with an odd point count, got [{}, {}] with {} points",
            grid.lo, grid.hi, grid.n
        )));
    }
    let h = grid.step();
    let xs = grid.points();
    let drift: Vec<f64> = xs.iter().map(|&x| model.f_star(x)).collect();
    if let Some(i) = drift.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { partial: "f_star", x: xs[i], theta: f64::NAN });
    }
    let scale = 2.0 / (model.sigma() * model.sigma());
    let mut potential: Vec<f64> = quadrature::cumulative(&drift, h)
        .into_iter()
        .map(|u| scale * u)
        .collect();
    let (imax, umax) = potential
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, u)| if u > acc.1 { (i, u) } else { acc });
    if imax == 0 || imax == grid.n - 1 {
        return Err(Error::Divergence(format!(
            "density is maximal at the domain boundary x = {}",
            xs[imax]
        )));
    }
    potential.iter_mut().for_each(|u| *u -= umax);
    let raw: Vec<f64> = potential.iter().map(|u| u.exp()).collect();
    let tail_ratio = raw[0].max(raw[grid.n - 1]);
    if tail_ratio > TRUNCATION_LIMIT {
        return Err(Error::Truncation { ratio: tail_ratio, limit: TRUNCATION_LIMIT });
    }
    let z = quadrature::trapezoid(&raw, h);
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::Divergence(format!("normalizing constant {z}")));
    }
    let m: Vec<f64> = raw.iter().map(|v| v / z).collect();
    let log_z = z.ln();
    let log_m = potential.iter().map(|u| u - log_z).collect();
    // tail beyond ±L: ∫_L^∞ e^{U} ≈ e^{U(L)} / |U'(L)|
    let tail = |i: usize| {
        let slope = (scale * drift[i]).abs();
        if slope > 0.0 { m[i] / slope } else { f64::INFINITY }
    };
    let tail_mass = tail(0) + tail(grid.n - 1);
    let weights = quadrature::trapezoid_weights(grid.n, h)
        .into_iter()
        .zip(&m)
        .map(|(w, v)| w * v)
        .collect();
    Ok(DensityTable { grid: Some(grid), x: xs, m, log_m, weights, tail_ratio, tail_mass })
}
