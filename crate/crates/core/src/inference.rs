//! Posterior-predictive regression functionals of chain draws.
//!
//! For one draw of the mixing measure, the joint density of `(x, y)` is a
//! mixture, so
//! `E[Y | x] = Σ_k w_k(x) x* β_k` with
//! `w_k(x) ∝ p_k Σ_j p_{j|k} ∏_l N(x_l; μ_{kj,l}, τ_{kj,l})`.
//! Urn-representation draws carry their new-cluster component as an ordinary
//! trailing component, so the same formulas apply to both samplers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::ChainDraw;
use crate::error::{EdpmError, Result};
use crate::stats::{mean, quantile_sorted, sort_floats};

pub const QUANTILE_LEVELS: [f64; 4] = [0.025, 0.25, 0.75, 0.975];

fn check_dims(draw: &ChainDraw, x: &[f64]) -> Result<()> {
    if draw.p() != x.len() {
        return Err(EdpmError::domain(format!(
            "draw has {} covariates but x has {}",
            draw.p(),
            x.len()
        )));
    }
    Ok(())
}

/// One draw prepared for repeated evaluation at many covariate vectors:
/// logs of weights and variances are taken once.
pub struct DrawPredictor<'a> {
    draw: &'a ChainDraw,
    p: usize,
    /// θ-index of each cell with positive weight.
    owner: Vec<usize>,
    /// `log p_k + log p_{j|k} − ½ Σ_l log τ_{kj,l}`.
    cell_const: Vec<f64>,
    mu: Vec<f64>,
    inv_tau: Vec<f64>,
}

impl<'a> DrawPredictor<'a> {
    pub fn new(draw: &'a ChainDraw) -> Self {
        let p = draw.p();
        let mut owner = Vec::new();
        let mut cell_const = Vec::new();
        let mut mu = Vec::new();
        let mut inv_tau = Vec::new();
        for (k, (&pk, (pw, pa))) in draw
            .theta_weights
            .iter()
            .zip(draw.psi_weights.iter().zip(&draw.psi_atoms))
            .enumerate()
        {
            for (&w, a) in pw.iter().zip(pa) {
                let c = pk.ln() + w.ln() - 0.5 * a.tau_x.iter().map(|t| t.ln()).sum::<f64>();
                if c == f64::NEG_INFINITY {
                    continue;
                }
                owner.push(k);
                cell_const.push(c);
                mu.extend_from_slice(&a.mu);
                inv_tau.extend(a.tau_x.iter().map(|t| 1.0 / t));
            }
        }
        DrawPredictor {
            draw,
            p,
            owner,
            cell_const,
            mu,
            inv_tau,
        }
    }

    /// Normalized `w_k(x)`.
    pub fn weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dims(self.draw, x)?;
        let p = self.p;
        let logm: Vec<f64> = self
            .cell_const
            .iter()
            .enumerate()
            .map(|(c, &base)| {
                let mu = &self.mu[c * p..(c + 1) * p];
                let it = &self.inv_tau[c * p..(c + 1) * p];
                let mut q = 0.0;
                for l in 0..p {
                    let d = x[l] - mu[l];
                    q += d * d * it[l];
                }
                base - 0.5 * q
            })
            .collect();
        let max = logm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(EdpmError::numerical("every mixture weight underflowed at x"));
        }
        let mut w = vec![0.0; self.draw.theta_weights.len()];
        for (&k, &v) in self.owner.iter().zip(&logm) {
            w[k] += (v - max).exp();
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        Ok(w)
    }

    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        let w = self.weights(x)?;
        Ok(w.iter()
            .zip(&self.draw.theta_atoms)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, a)| w * a.mean(x))
            .sum())
    }
}

/// The covariate-dependent θ-weights `w_k(x)`.
pub fn conditional_weights(draw: &ChainDraw, x: &[f64]) -> Result<Vec<f64>> {
    DrawPredictor::new(draw).weights(x)
}

pub fn conditional_mean(draw: &ChainDraw, x: &[f64]) -> Result<f64> {
    DrawPredictor::new(draw).mean(x)
}

/// `f(y | x) = Σ_k w_k(x) N(y; x* β_k, τ_k)` on each grid point.
pub fn conditional_density(draw: &ChainDraw, x: &[f64], y_grid: &[f64]) -> Result<Vec<f64>> {
    let w = conditional_weights(draw, x)?;
    Ok(y_grid
        .iter()
        .map(|&y| {
            w.iter()
                .zip(&draw.theta_atoms)
                .filter(|(w, _)| **w > 0.0)
                .map(|(w, a)| w * a.log_density(x, y).exp())
                .sum()
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub mean: f64,
    /// Values at [`QUANTILE_LEVELS`], type-7 interpolation.
    pub quantiles: [f64; 4],
}

impl PredictiveSummary {
    /// Summary of a set of values; errors when empty.
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(EdpmError::domain("cannot summarize an empty chain"));
        }
        let mut sorted = values.to_vec();
        sort_floats(&mut sorted);
        Ok(PredictiveSummary {
            mean: mean(values),
            quantiles: QUANTILE_LEVELS.map(|q| quantile_sorted(&sorted, q)),
        })
    }

    pub fn quantile(&self, level: f64) -> Option<f64> {
        QUANTILE_LEVELS
            .iter()
            .position(|&l| l == level)
            .map(|i| self.quantiles[i])
    }
}

/// `E[Y | x]` under every draw, in draw order.
pub fn conditional_mean_trace(draws: &[ChainDraw], x: &[f64]) -> Result<Vec<f64>> {
    draws.par_iter().map(|d| conditional_mean(d, x)).collect()
}

pub fn predictive_summary(draws: &[ChainDraw], x: &[f64]) -> Result<PredictiveSummary> {
    if draws.is_empty() {
        return Err(EdpmError::domain("cannot summarize an empty chain"));
    }
    PredictiveSummary::of(&conditional_mean_trace(draws, x)?)
}

/// Mean absolute and mean squared error.
pub fn prediction_errors(estimates: &[f64], truths: &[f64]) -> Result<(f64, f64)> {
    if estimates.len() != truths.len() || estimates.is_empty() {
        return Err(EdpmError::domain(format!(
            "{} estimates for {} true values",
            estimates.len(),
            truths.len()
        )));
    }
    let m = estimates.len() as f64;
    let (l1, l2) = estimates
        .iter()
        .zip(truths)
        .fold((0.0, 0.0), |(a, b), (e, t)| (a + (e - t).abs(), b + (e - t).powi(2)));
    Ok((l1 / m, l2 / m))
}
