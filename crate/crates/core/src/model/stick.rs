//! Truncated stick-breaking weights.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{EdpmError, Result};

/// Tolerance on the terminal stick and on `Σ w = 1`.
pub const PROB_TOL: f64 = 1e-12;

/// Stick fractions `V` together with the weights they induce.
///
/// The last stick is always exactly 1, so the weights sum to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StickWeights {
    v: Vec<f64>,
    w: Vec<f64>,
}

impl StickWeights {
    pub fn from_sticks(v: Vec<f64>) -> Result<Self> {
        let w = stick_break(&v)?;
        Ok(StickWeights { v, w })
    }

    /// Draws `V_k ~ Beta(1, alpha)` for `k < len` and closes the stick.
    pub fn from_prior<R: Rng + ?Sized>(len: usize, alpha: f64, rng: &mut R) -> Result<Self> {
        if len < 2 {
            return Err(EdpmError::domain(format!("stick length {len} < 2")));
        }
        let beta = beta_dist(1.0, alpha)?;
        let mut v: Vec<f64> = (0..len - 1).map(|_| beta.sample(rng)).collect();
        v.push(1.0);
        Self::from_sticks(v)
    }

    pub fn sticks(&self) -> &[f64] {
        &self.v
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// `Σ_{k<len} log(1 - V_k)` with `1 - V` clamped below at 1e-15.
    pub fn log_remaining_sum(&self) -> f64 {
        self.v[..self.v.len() - 1]
            .iter()
            .map(|&v| (1.0 - v).max(1e-15).ln())
            .sum()
    }
}

/// `w_1 = V_1`, `w_k = V_k ∏_{h<k} (1 - V_h)`.
pub fn stick_break(v: &[f64]) -> Result<Vec<f64>> {
    if v.len() < 2 {
        return Err(EdpmError::InvalidStick(format!(
            "need at least 2 sticks, got {}",
            v.len()
        )));
    }
    if let Some((k, x)) = v
        .iter()
        .enumerate()
        .find(|(_, x)| !(0.0..=1.0).contains(*x))
    {
        return Err(EdpmError::domain(format!("stick {k} = {x} outside [0, 1]")));
    }
    let last = v[v.len() - 1];
    if (last - 1.0).abs() > PROB_TOL {
        return Err(EdpmError::InvalidStick(format!(
            "terminal stick must be 1, got {last}"
        )));
    }
    let mut remaining = 1.0;
    let mut w = Vec::with_capacity(v.len());
    for &vk in &v[..v.len() - 1] {
        w.push(vk * remaining);
        remaining *= 1.0 - vk;
    }
    // The terminal stick takes whatever is left, which keeps Σ w = 1 exact
    // up to the rounding of the running product.
    w.push(remaining);
    Ok(w)
}

pub(crate) fn beta_dist(a: f64, b: f64) -> Result<Beta<f64>> {
    Beta::new(a, b).map_err(|e| EdpmError::domain(format!("Beta({a}, {b}): {e}")))
}
