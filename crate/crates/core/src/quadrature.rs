//! Uniform grids and the quadrature rules used by the density and Poisson
//! computations.
//!
//! Whole-domain integrals use the composite trapezoid rule. Running
//! (cumulative) integrals use a sixth-order cell rule: each cell is integrated
//! against the degree-5 interpolant through the six nearest nodes, with
//! one-sided stencils at the ends of the grid.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl UniformGrid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("grid bounds [{lo}, {hi}] are not an interval")));
        }
        if n < 3 {
            return Err(Error::Config(format!("grid needs at least 3 points, got {n}")));
        }
        Ok(Self { lo, hi, n })
    }

    /// Symmetric grid on `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, n: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n)
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.n - 1 {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (self.lo + self.hi).abs() <= 1e-12 * self.hi.abs()
    }
}

/// Composite trapezoid weights for `n` nodes with spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..n - 1].iter().sum();
    h * (inner + 0.5 * (values[0] + values[n - 1]))
}

const STENCIL: usize = 6;

/// `∫_0^1 ℓ_j(s) ds` for the Lagrange basis on nodes `offset, offset+1, ...`.
fn cell_weights(offset: i64, m: usize) -> Vec<f64> {
    let nodes: Vec<f64> = (0..m).map(|j| (offset + j as i64) as f64).collect();
    (0..m)
        .map(|j| {
            // coefficients of prod_{k != j} (s - s_k), lowest degree first
            let mut poly = vec![1.0];
            let mut denom = 1.0;
            for (k, &sk) in nodes.iter().enumerate() {
                if k == j {
                    continue;
                }
                let mut next = vec![0.0; poly.len() + 1];
                for (p, &c) in poly.iter().enumerate() {
                    next[p + 1] += c;
                    next[p] -= sk * c;
                }
                poly = next;
                denom *= nodes[j] - sk;
            }
            poly.iter()
                .enumerate()
                .map(|(p, &c)| c / (p + 1) as f64)
                .sum::<f64>()
                / denom
        })
        .collect()
}

/// Running integral `I[i] = ∫_{x_0}^{x_i} F` of grid samples `values`.
pub fn cumulative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n < STENCIL {
        for i in 0..n - 1 {
            out[i + 1] = out[i] + 0.5 * h * (values[i] + values[i + 1]);
        }
        return out;
    }
    // offsets range over -(STENCIL-1)..=0
    let table: Vec<Vec<f64>> = (0..STENCIL)
        .map(|k| cell_weights(-(k as i64), STENCIL))
        .collect();
    let centered = STENCIL / 2 - 1;
    for i in 0..n - 1 {
        let start = i.saturating_sub(centered).min(n - STENCIL);
        let w = &table[i - start];
        let cell: f64 = w
            .iter()
            .zip(&values[start..start + STENCIL])
            .map(|(a, b)| a * b)
            .sum();
        out[i + 1] = out[i] + h * cell;
    }
    out
}

/// Exponentially scaled running integral
/// `J[i] = e^{−U(x_i)} ∫_{x_0}^{x_i} H(y) e^{U(y)} dy`,
/// evaluated without forming `e^{U}` so that it stays finite when the weight
/// under- or overflows.
pub fn scaled_cumulative(values: &[f64], log_weight: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    debug_assert_eq!(n, log_weight.len());
    let mut out = vec![0.0; n];
    if n < STENCIL {
        for i in 0..n.saturating_sub(1) {
            let decay = (log_weight[i] - log_weight[i + 1]).exp();
            out[i + 1] = out[i] * decay
                + 0.5 * h * (values[i] * decay + values[i + 1]);
        }
        return out;
    }
    let table: Vec<Vec<f64>> = (0..STENCIL)
        .map(|k| cell_weights(-(k as i64), STENCIL))
        .collect();
    let centered = STENCIL / 2 - 1;
    for i in 0..n - 1 {
        let start = i.saturating_sub(centered).min(n - STENCIL);
        let w = &table[i - start];
        let target = log_weight[i + 1];
        let cell: f64 = (0..STENCIL)
            .map(|j| w[j] * values[start + j] * (log_weight[start + j] - target).exp())
            .sum();
        out[i + 1] = out[i] * (log_weight[i] - target).exp() + h * cell;
    }
    out
}

/// [`scaled_cumulative`] taken from the right end:
/// `J[i] = e^{−U(x_i)} ∫_{x_i}^{x_{n−1}} H(y) e^{U(y)} dy`.
pub fn scaled_cumulative_from_right(values: &[f64], log_weight: &[f64], h: f64) -> Vec<f64> {
    let rv: Vec<f64> = values.iter().rev().copied().collect();
    let rw: Vec<f64> = log_weight.iter().rev().copied().collect();
    let mut out = scaled_cumulative(&rv, &rw, h);
    out.reverse();
    out
}

/// Running integral from the right end: `I[i] = ∫_{x_i}^{x_{n-1}} F`.
pub fn cumulative_from_right(values: &[f64], h: f64) -> Vec<f64> {
    let reversed: Vec<f64> = values.iter().rev().copied().collect();
    let mut out = cumulative(&reversed, h);
    out.reverse();
    out
}
