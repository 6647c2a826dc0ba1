//! Fluctuation statistics: empirical Wasserstein-1 distances, variance
//! estimators and log-log rate fits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::simulate::PathEnsemble;

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// W₁ between two equal-size empirical measures: the mean absolute
/// difference of their order statistics.
pub fn w1_empirical(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::Domain("W1 of empty samples".into()));
    }
    Ok(w1_sorted(&sorted(a), &sorted(b)))
}

fn w1_sorted(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// How a sample is compared with a Gaussian law.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum W1Mode {
    /// Against a Gaussian sample of the same size drawn from a fixed seed.
    PairedEmpirical { seed: u64 },
    /// Against the Gaussian quantile function evaluated at `(i − ½)/N`.
    Quantile,
}

/// Seed of the comparison sample used when none is configured.
pub const DEFAULT_REFERENCE_SEED: u64 = 0x5E_ED0F_6A55;

/// The Gaussian comparison sample used by [`W1Mode::PairedEmpirical`].
pub fn gaussian_reference_sample(n: usize, mean: f64, variance: f64, seed: u64) -> Vec<f64> {
    let sd = variance.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            mean + sd * z
        })
        .collect()
}

pub fn w1_vs_gaussian(sample: &[f64], mean: f64, variance: f64, mode: W1Mode) -> Result<f64> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::Domain(format!("Gaussian variance must be positive, got {variance}")));
    }
    if sample.is_empty() {
        return Err(Error::Domain("W1 of an empty sample".into()));
    }
    let n = sample.len();
    let a = sorted(sample);
    match mode {
        W1Mode::PairedEmpirical { seed } => {
            let b = sorted(&gaussian_reference_sample(n, mean, variance, seed));
            Ok(w1_sorted(&a, &b))
        }
        W1Mode::Quantile => {
            let normal = Normal::new(mean, variance.sqrt())
                .map_err(|e| Error::Domain(format!("Gaussian target: {e}")))?;
            let total: f64 = a
                .iter()
                .enumerate()
                .map(|(i, &x)| (x - normal.inverse_cdf((i as f64 + 0.5) / n as f64)).abs())
                .sum();
            Ok(total / n as f64)
        }
    }
}

/// Unbiased sample mean and variance, computed on the sorted values so the
/// result does not depend on the order of the input.
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let v = sorted(values);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    dev.sort_by(f64::total_cmp);
    let var = if v.len() > 1 { dev.iter().sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var)
}

/// Jackknife standard error of the sample mean.
pub fn jackknife_mean_stderr(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    let total: f64 = values.iter().sum();
    let nf = n as f64;
    let loo: Vec<f64> = values.iter().map(|v| (total - v) / (nf - 1.0)).collect();
    let loo_mean = loo.iter().sum::<f64>() / nf;
    let ss: f64 = loo.iter().map(|m| (m - loo_mean) * (m - loo_mean)).sum();
    ((nf - 1.0) / nf * ss).sqrt()
}

/// Rescaled fluctuations `F = √t(θ_t − θ*)` and variance estimators at one
/// snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationStats {
    pub t: f64,
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance of `θ_t`.
    pub var: f64,
    /// `t · var`, the estimator of the limiting variance.
    pub t_var: f64,
    pub t_var_stderr: f64,
    pub f_sample: Vec<f64>,
}

pub fn fluctuation_stats(ensemble: &PathEnsemble, theta_star: f64, t: f64) -> Result<FluctuationStats> {
    let s = ensemble
        .snapshot_index(t)
        .ok_or_else(|| Error::Domain(format!("no snapshot at t = {t}")))?;
    let theta = ensemble.theta_at(s);
    if theta.is_empty() {
        return Err(Error::Domain(format!("all {} paths are flagged", ensemble.n_paths())));
    }
    if theta.len() < 2 {
        return Err(Error::Domain("variance needs at least two unflagged paths".into()));
    }
    let t = ensemble.snapshot_times[s];
    let (mean, var) = mean_var(&theta);
    let n = theta.len() as f64;
    let mut fourth: Vec<f64> = theta.iter().map(|x| (x - mean).powi(4)).collect();
    fourth.sort_by(f64::total_cmp);
    let m4 = fourth.iter().sum::<f64>() / n;
    let var_se = ((m4 - (n - 3.0) / (n - 1.0) * var * var) / n).max(0.0).sqrt();
    let root_t = t.sqrt();
    Ok(FluctuationStats {
        t,
        n: theta.len(),
        mean,
        var,
        t_var: t * var,
        t_var_stderr: t * var_se,
        f_sample: theta.iter().map(|v| root_t * (v - theta_star)).collect(),
    })
}

/// A positive statistic observed over time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

/// Least-squares slope of `log v` against `log t` over the points with
/// `t ∈ [lo, hi]`.
pub fn rate_fit(series: &RateSeries, window: (f64, f64)) -> Result<RateFit> {
    if series.times.len() != series.values.len() {
        return Err(Error::SizeMismatch(series.times.len(), series.values.len()));
    }
    if series.times.windows(2).any(|w| w[1] <= w[0]) || series.times.iter().any(|&t| t <= 0.0) {
        return Err(Error::Fit("times must be positive and strictly increasing".into()));
    }
    let (lo, hi) = window;
    let pts: Vec<(f64, f64)> = series
        .times
        .iter()
        .zip(&series.values)
        .filter(|(&t, _)| t >= lo && t <= hi)
        .map(|(&t, &v)| (t, v))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Fit(format!(
            "window [{lo}, {hi}] holds {} points, need at least 3",
            pts.len()
        )));
    }
    if let Some(&(t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Fit(format!("nonpositive value {v} at t = {t}")));
    }
    let n = pts.len() as f64;
    let lx: Vec<f64> = pts.iter().map(|(t, _)| t.ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|(_, v)| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(RateFit { slope, intercept: my - slope * mx, window, n_points: pts.len() })
}
