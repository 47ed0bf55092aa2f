//! Browser bindings for three interactive views: the truncation-bound
//! explorer, prior stick-breaking weights, and the one-covariate toy model
//! with a blocked Gibbs fit of `E[Y|x]`.
//!
//! Each export is a thin wrapper over a plain function so the numerics can be
//! tested natively. Arrays cross the boundary flattened row by row.

use edpm::bounds::{l1_bound, min_truncation, BoundQuery};
use edpm::gibbs::{run_chain_with, ChainConfig, InitPolicy, TruncationSpec};
use edpm::inference::DrawPredictor;
use edpm::model::{Dataset, StickWeights, Truncation};
use edpm::rng::stream;
use edpm::simstudy::{default_hyperparameters, mixing_weight, simulate, true_conditional_mean, DgpConfig};
use edpm::stats::{quantile_sorted, sort_floats};
use edpm::{EdpmError, Result};
use wasm_bindgen::prelude::*;

const X_LO: f64 = -0.5;
const X_HI: f64 = 8.0;

fn js(r: Result<Vec<f64>>) -> std::result::Result<Vec<f64>, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

fn grid(points: usize) -> Vec<f64> {
    let steps = (points.max(2) - 1) as f64;
    (0..points.max(2)).map(|i| X_LO + (X_HI - X_LO) * i as f64 / steps).collect()
}

/// `[bound at (N, M), min N, min M, bound at the minimal pair]`.
pub fn bound_summary(n: usize, trunc_n: usize, trunc_m: usize, alpha_theta: f64, alpha_psi: f64, eps: f64) -> Result<Vec<f64>> {
    let q = BoundQuery {
        n,
        trunc_n,
        trunc_m,
        alpha_theta,
        alpha_psi,
    };
    let b = l1_bound(&q)?.bound;
    let (mn, mm) = min_truncation(n, alpha_theta, alpha_psi, eps)?;
    let at_min = l1_bound(&BoundQuery {
        trunc_n: mn,
        trunc_m: mm,
        ..q
    })?
    .bound;
    Ok(vec![b, mn as f64, mm as f64, at_min])
}

/// `log10` of the bound for `N = 2..=max_n` at fixed `M`, followed by the
/// same for `M = 2..=max_m` at fixed `N`.
pub fn bound_profiles(
    n: usize,
    trunc_n: usize,
    trunc_m: usize,
    alpha_theta: f64,
    alpha_psi: f64,
    max_n: usize,
    max_m: usize,
) -> Result<Vec<f64>> {
    let at = |tn, tm| {
        l1_bound(&BoundQuery {
            n,
            trunc_n: tn,
            trunc_m: tm,
            alpha_theta,
            alpha_psi,
        })
        .map(|r| r.bound.log10())
    };
    let mut out = Vec::with_capacity(max_n + max_m);
    for k in 2..=max_n {
        out.push(at(k, trunc_m)?);
    }
    for k in 2..=max_m {
        out.push(at(trunc_n, k)?);
    }
    Ok(out)
}

/// One prior draw of truncated stick-breaking weights followed by their
/// prior expectations.
pub fn stick_draw(alpha: f64, len: usize, seed: u64) -> Result<Vec<f64>> {
    if len < 2 {
        return Err(EdpmError::domain("need at least 2 sticks"));
    }
    let w = StickWeights::from_prior(len, alpha, &mut stream(seed, 0))?;
    let r = alpha / (1.0 + alpha);
    let mut out = w.weights().to_vec();
    out.extend((0..len).map(|k| if k + 1 < len { (1.0 - r) * r.powi(k as i32) } else { r.powi(k as i32) }));
    Ok(out)
}

/// Toy-model data with one covariate, flattened as `[x1, y, x1, y, ...]`.
pub fn toy_data(n: usize, seed: u64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(EdpmError::domain("need at least 2 observations"));
    }
    let d = simulate(&DgpConfig::new(1, n)?, &mut stream(seed, 0))?;
    Ok((0..d.n()).flat_map(|i| [d.row(i)[0], d.y()[i]]).collect())
}

/// Ground truth on the display grid: `[x1, E[Y|x1], weight of regime 1]`
/// per point.
pub fn toy_truth(points: usize) -> Result<Vec<f64>> {
    let cfg = DgpConfig::new(1, 1)?;
    Ok(grid(points)
        .into_iter()
        .flat_map(|x| [x, true_conditional_mean(x, &cfg), mixing_weight(x, &cfg)])
        .collect())
}

/// Blocked Gibbs fit to flattened `[x1, y, ...]` data; returns
/// `[x1, mean, q025, q975]` of `E[Y|x1]` per grid point.
pub fn toy_fit(
    data: &[f64],
    iterations: usize,
    burn_in: usize,
    trunc_n: usize,
    trunc_m: usize,
    seed: u64,
    points: usize,
) -> Result<Vec<f64>> {
    if data.len() < 4 || data.len() % 2 != 0 {
        return Err(EdpmError::domain("data must hold at least two (x1, y) pairs"));
    }
    let x: Vec<f64> = data.chunks_exact(2).map(|c| c[0]).collect();
    let y: Vec<f64> = data.chunks_exact(2).map(|c| c[1]).collect();
    let ds = Dataset::new(y, x, 1)?;
    let hp = default_hyperparameters(&ds)?;
    let cfg = ChainConfig {
        iterations,
        burn_in,
        thin: 1,
        seed,
        stream: 0,
        trunc: TruncationSpec::Fixed(Truncation::new(trunc_n, trunc_m)?),
        init: InitPolicy::PriorDraw,
    };
    let xs = grid(points);
    let mut traces = vec![Vec::with_capacity(iterations - burn_in.min(iterations)); xs.len()];
    run_chain_with(&ds, &hp, &cfg, |d| {
        let pred = DrawPredictor::new(d);
        for (t, &x1) in traces.iter_mut().zip(&xs) {
            t.push(pred.mean(&[x1])?);
        }
        Ok(())
    })?;
    let mut out = Vec::with_capacity(4 * xs.len());
    for (x1, mut t) in xs.into_iter().zip(traces) {
        let m = t.iter().sum::<f64>() / t.len() as f64;
        sort_floats(&mut t);
        out.extend([x1, m, quantile_sorted(&t, 0.025), quantile_sorted(&t, 0.975)]);
    }
    Ok(out)
}

#[wasm_bindgen(js_name = boundSummary)]
pub fn bound_summary_js(
    n: u32,
    trunc_n: u32,
    trunc_m: u32,
    alpha_theta: f64,
    alpha_psi: f64,
    eps: f64,
) -> std::result::Result<Vec<f64>, JsError> {
    js(bound_summary(n as usize, trunc_n as usize, trunc_m as usize, alpha_theta, alpha_psi, eps))
}

#[wasm_bindgen(js_name = boundProfiles)]
pub fn bound_profiles_js(
    n: u32,
    trunc_n: u32,
    trunc_m: u32,
    alpha_theta: f64,
    alpha_psi: f64,
    max_n: u32,
    max_m: u32,
) -> std::result::Result<Vec<f64>, JsError> {
    js(bound_profiles(
        n as usize,
        trunc_n as usize,
        trunc_m as usize,
        alpha_theta,
        alpha_psi,
        max_n as usize,
        max_m as usize,
    ))
}

#[wasm_bindgen(js_name = stickDraw)]
pub fn stick_draw_js(alpha: f64, len: u32, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
    js(stick_draw(alpha, len as usize, seed as u64))
}

#[wasm_bindgen(js_name = toyData)]
pub fn toy_data_js(n: u32, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
    js(toy_data(n as usize, seed as u64))
}

#[wasm_bindgen(js_name = toyTruth)]
pub fn toy_truth_js(points: u32) -> std::result::Result<Vec<f64>, JsError> {
    js(toy_truth(points as usize))
}

#[wasm_bindgen(js_name = toyFit)]
pub fn toy_fit_js(
    data: &[f64],
    iterations: u32,
    burn_in: u32,
    trunc_n: u32,
    trunc_m: u32,
    seed: u32,
    points: u32,
) -> std::result::Result<Vec<f64>, JsError> {
    js(toy_fit(
        data,
        iterations as usize,
        burn_in as usize,
        trunc_n as usize,
        trunc_m as usize,
        seed as u64,
        points as usize,
    ))
}
