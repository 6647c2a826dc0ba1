//! One-dimensional Poisson equations `L_x v = H` for the generator
//! `L_x = f*(x)∂_x + (σ²/2)∂_xx` of the data process, and the averaged
//! quantities built on them: `ḡ` and its derivatives, the convexity constant
//! `C_ḡ = ḡ_θθ(θ*)`, `h̄` and the limiting variance `Σ̄`.
//!
//! With the invariant density `m`, `L_x v = (σ²/2) m⁻¹ (m v_x)_x`, so a
//! centered source integrates directly:
//!
//! ```text
//! v_x(x) = (2/σ²) m(x)⁻¹ ∫_{−L}^{x} H m = −(2/σ²) m(x)⁻¹ ∫_{x}^{L} H m
//! ```
//!
//! The lower-tail form is used left of the mode of `m` and the upper-tail
//! form right of it; each is free of cancellation on its side.

use std::fmt;

use crate::error::{Error, Result};
use crate::models::{g_partials, g_value, DensityTable, DriftModel};
use crate::quadrature;

/// Largest `|∫H dμ|` accepted as centered.
pub const CENTERING_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolution {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub v_x: Vec<f64>,
    /// `|∫ v dμ|` after centering.
    pub centering_residual: f64,
    /// `|∫ H dμ|` of the source as given.
    pub source_residual: f64,
    /// Largest gap between the lower- and upper-tail forms of `v_x` where
    /// `m ≥ 10⁻⁶ max m`.
    pub tail_discrepancy: f64,
}

/// Solves `L_x v = H` for a source tabulated on the density grid and
/// returns the solution with `∫ v dμ = 0`.
pub fn solve<M: DriftModel + ?Sized>(source: &[f64], model: &M, density: &DensityTable) -> Result<PoissonSolution> {
    if source.len() != density.x.len() {
        return Err(Error::SizeMismatch(source.len(), density.x.len()));
    }
    if let Some(i) = source.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("source is non-finite at x = {}", density.x[i])));
    }
    let mean = density.expect(source);
    if mean.abs() > CENTERING_LIMIT {
        return Err(Error::Centering { residual: mean.abs(), limit: CENTERING_LIMIT });
    }
    let grid = match density.grid {
        Some(g) => g,
        None => {
            return Ok(PoissonSolution {
                x: density.x.clone(),
                v: vec![0.0; source.len()],
                v_x: vec![0.0; source.len()],
                centering_residual: 0.0,
                source_residual: mean.abs(),
                tail_discrepancy: 0.0,
            })
        }
    };
    let h = grid.step();
    let n = grid.n;
    // re-center with the running-integral rule itself so that both tail
    // forms vanish at the far end
    let hm: Vec<f64> = source.iter().zip(&density.m).map(|(s, m)| s * m).collect();
    let mass = *quadrature::cumulative(&density.m, h).last().unwrap_or(&1.0);
    let shift = *quadrature::cumulative(&hm, h).last().unwrap_or(&0.0) / mass;
    let centered: Vec<f64> = source.iter().map(|s| s - shift).collect();
    let scale = 2.0 / (model.sigma() * model.sigma());
    let lower = quadrature::scaled_cumulative(&centered, &density.log_m, h);
    let upper = quadrature::scaled_cumulative_from_right(&centered, &density.log_m, h);
    let mode = density
        .log_m
        .iter()
        .enumerate()
        .fold(0, |best, (i, &l)| if l > density.log_m[best] { i } else { best });
    let v_x: Vec<f64> = (0..n)
        .map(|i| scale * if i <= mode { lower[i] } else { -upper[i] })
        .collect();
    let floor = density.log_m[mode] + (1e-6f64).ln();
    let tail_discrepancy = (0..n)
        .filter(|&i| density.log_m[i] >= floor)
        .map(|i| scale * (lower[i] + upper[i]).abs())
        .fold(0.0, f64::max);
    let raw = quadrature::cumulative(&v_x, h);
    let offset = density.expect(&raw);
    let v: Vec<f64> = raw.iter().map(|r| r - offset).collect();
    let centering_residual = density.expect(&v).abs();
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("Poisson solution is non-finite at x = {}", density.x[i])));
    }
    Ok(PoissonSolution {
        x: density.x.clone(),
        v,
        v_x,
        centering_residual,
        source_residual: mean.abs(),
        tail_discrepancy,
    })
}

/// `(σ²/2) v_xx + f* v_x − H` by central differences at interior nodes
/// (zero at the two end nodes).
pub fn generator_residual<M: DriftModel + ?Sized>(
    sol: &PoissonSolution,
    source: &[f64],
    model: &M,
) -> Vec<f64> {
    let n = sol.v.len();
    let mut out = vec![0.0; n];
    if n < 3 {
        return out;
    }
    let h = sol.x[1] - sol.x[0];
    let half_var = 0.5 * model.sigma() * model.sigma();
    for i in 1..n - 1 {
        let (a, b, c) = (sol.v[i - 1], sol.v[i], sol.v[i + 1]);
        let vxx = (c - 2.0 * b + a) / (h * h);
        let vx = (c - a) / (2.0 * h);
        out[i] = half_var * vxx + model.f_star(sol.x[i]) * vx - source[i];
    }
    out
}

/// `∂^order g/∂θ^order (x, θ)` for `order ∈ {0, 1, 2, 3}`.
fn g_derivative<M: DriftModel + ?Sized>(model: &M, x: f64, theta: f64, order: u8) -> Result<f64> {
    if order == 0 {
        let v = g_value(model, x, theta);
        return if v.is_finite() { Ok(v) } else { Err(Error::NonFinite { partial: "g", x, theta }) };
    }
    let g = g_partials(model, x, theta)?;
    Ok(match order {
        1 => g.g_theta,
        2 => g.g_thetatheta,
        _ => g.g_thetathetatheta,
    })
}

/// `∂^order ḡ/∂θ^order (θ) = ∫ ∂^order g/∂θ^order (x, θ) μ(dx)`.
pub fn gbar<M: DriftModel + ?Sized>(model: &M, density: &DensityTable, theta: f64, order: u8) -> Result<f64> {
    if order > 3 {
        return Err(Error::Config(format!("gbar: order must be 0..=3, got {order}")));
    }
    let mut acc = 0.0;
    for (w, &x) in density.weights.iter().zip(&density.x) {
        acc += w * g_derivative(model, x, theta, order)?;
    }
    Ok(acc)
}

/// Source `ḡ_θ(θ) − g_θ(x, θ)` of the Poisson equation for `Ψ`.
pub fn prelimit_source<M: DriftModel + ?Sized>(model: &M, density: &DensityTable, theta: f64) -> Result<Vec<f64>> {
    let mean = gbar(model, density, theta, 1)?;
    density
        .x
        .iter()
        .map(|&x| Ok(mean - g_partials(model, x, theta)?.g_theta))
        .collect()
}

/// Source `ḡ_θθ(θ) − g_θθ(x, θ)`.
pub fn curvature_source<M: DriftModel + ?Sized>(model: &M, density: &DensityTable, theta: f64) -> Result<Vec<f64>> {
    let mean = gbar(model, density, theta, 2)?;
    density
        .x
        .iter()
        .map(|&x| Ok(mean - g_partials(model, x, theta)?.g_thetatheta))
        .collect()
}

/// `h(x, θ) = σ²[f_θ σ⁻² − Ψ_x]²` on the density grid, with `Ψ` solving the
/// Poisson equation with source `ḡ_θ − g_θ`.
pub fn h_values<M: DriftModel + ?Sized>(
    model: &M,
    density: &DensityTable,
    theta: f64,
) -> Result<(Vec<f64>, PoissonSolution)> {
    let psi = solve(&prelimit_source(model, density, theta)?, model, density)?;
    let s2 = model.sigma() * model.sigma();
    let h = density
        .x
        .iter()
        .zip(&psi.v_x)
        .map(|(&x, &psi_x)| {
            let r = model.partials(x, theta).f_theta / s2 - psi_x;
            s2 * r * r
        })
        .collect();
    Ok((h, psi))
}

/// `h̄(θ) = ∫ h(x, θ) μ(dx)`.
pub fn hbar<M: DriftModel + ?Sized>(model: &M, density: &DensityTable, theta: f64) -> Result<f64> {
    let (h, _) = h_values(model, density, theta)?;
    Ok(density.expect(&h))
}

/// Source `h(x, θ) − h̄(θ)`.
pub fn h_source<M: DriftModel + ?Sized>(model: &M, density: &DensityTable, theta: f64) -> Result<Vec<f64>> {
    let (h, _) = h_values(model, density, theta)?;
    let mean = density.expect(&h);
    Ok(h.into_iter().map(|v| v - mean).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `C_α C_ḡ > ½`.
    Convergent,
    Divergent,
}

impl Regime {
    pub fn classify(c_alpha_c_gbar: f64) -> Self {
        if c_alpha_c_gbar > 0.5 { Regime::Convergent } else { Regime::Divergent }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Convergent => "convergent",
            Regime::Divergent => "divergent",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Exponent `β` in the bound `d_W(F_t, N) ≲ t^{β}` (up to a `log t` factor
/// in the fast regime); `None` when `C_ḡ C_α ≤ σ²/2`.
pub fn predicted_w1_exponent(c_gbar_c_alpha: f64, sigma: f64) -> Option<f64> {
    let s2 = sigma * sigma;
    if c_gbar_c_alpha >= 0.75 * s2 {
        Some(-0.25)
    } else if c_gbar_c_alpha > 0.5 * s2 {
        Some(-(c_gbar_c_alpha / s2 - 0.5))
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    pub c_alpha: f64,
    pub c_gbar: f64,
    pub h_bar: f64,
    /// Present only in the convergent regime.
    pub sigma_bar: Option<f64>,
    pub regime: Regime,
    /// `sup |Ψ_x|` at `θ*`; zero up to round-off for well-specified models.
    pub psi_x_sup: f64,
}

impl VarianceReport {
    pub fn c_gbar_c_alpha(&self) -> f64 {
        self.c_gbar * self.c_alpha
    }
}

/// `Σ̄ = C_α² h̄(θ*) / (2(C_α ḡ_θθ(θ*) − ½))`, the closed form of
/// `C_α² ∫₀^∞ e^{−2s(C_α ḡ_θθ(θ*) − ½)} h̄(θ*) ds`.
pub fn limiting_variance<M: DriftModel + ?Sized>(
    model: &M,
    density: &DensityTable,
    theta_star: f64,
    c_alpha: f64,
) -> Result<VarianceReport> {
    if !(c_alpha > 0.0 && c_alpha.is_finite()) {
        return Err(Error::Config(format!("c_alpha: must be positive, got {c_alpha}")));
    }
    let c_gbar = gbar(model, density, theta_star, 2)?;
    let (h, psi) = h_values(model, density, theta_star)?;
    let h_bar = density.expect(&h);
    let rate = c_alpha * c_gbar - 0.5;
    let regime = Regime::classify(c_alpha * c_gbar);
    let sigma_bar = (regime == Regime::Convergent).then(|| c_alpha * c_alpha * h_bar / (2.0 * rate));
    let psi_x_sup = psi.v_x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(VarianceReport { c_alpha, c_gbar, h_bar, sigma_bar, regime, psi_x_sup })
}
