//! The conditional updates of one blocked Gibbs sweep.
//!
//! Each function redraws one block of [`GibbsState`] from its full
//! conditional. Clusters (or cells) without observations redraw from the
//! base measure, which is what the conjugate formulas reduce to with no
//! data.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{EdpmError, Result};
use crate::model::prior::{gamma_rate, standard_normal_vec};
use crate::model::{beta_dist, BaseMeasure, Dataset, GibbsState, StickWeights};
use crate::stats::sample_log_categorical;

fn members_by_theta(state: &GibbsState) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); state.trunc.n()];
    for (i, &k) in state.k.iter().enumerate() {
        out[k].push(i);
    }
    out
}

fn members_by_cell(state: &GibbsState) -> Vec<Vec<Vec<usize>>> {
    let mut out = vec![vec![Vec::new(); state.trunc.m()]; state.trunc.n()];
    for (i, (&k, &j)) in state.k.iter().zip(&state.j).enumerate() {
        out[k][j].push(i);
    }
    out
}

/// Precision factor `Λ = X_kᵀ X_k + C_y` and mean `Λ^{-1}(X_kᵀ y_k + C_y β_0)`
/// of `β | τ_y` for the observations in `idx`; the covariance is `τ_y Λ^{-1}`.
pub fn regression_posterior(
    data: &Dataset,
    idx: &[usize],
    base: &BaseMeasure,
) -> Result<(DVector<f64>, Cholesky<f64, Dyn>)> {
    let xk = design_matrix(data, idx);
    let yk = DVector::from_iterator(idx.len(), idx.iter().map(|&i| data.y()[i]));
    let prec = xk.tr_mul(&xk) + &base.c_y;
    let rhs = xk.tr_mul(&yk) + &base.c_y_beta0;
    let chol = Cholesky::new(prec)
        .ok_or_else(|| EdpmError::Matrix("XᵀX + C_y is not positive definite".into()))?;
    Ok((chol.solve(&rhs), chol))
}

fn design_matrix(data: &Dataset, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), data.p() + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            data.row(idx[r])[c - 1]
        }
    })
}

/// Draws a regression atom `(β, τ_y)` given the observations in `idx`,
/// starting from the current variance `tau_y`:
///
/// * `β | τ_y ~ N(Λ^{-1}(X_kᵀ y_k + C_y β_0), τ_y Λ^{-1})`, `Λ = X_kᵀ X_k + C_y`;
/// * `1/τ_y | β ~ Gamma(a_y + (n_k + p + 1)/2,
///   b_y + ½ Σ (y_i − x*_i β)² + ½ (β − β_0)ᵀ C_y (β − β_0))`.
///
/// The second update conditions on the freshly drawn β.
pub(crate) fn draw_regression_atom<R: Rng + ?Sized>(
    data: &Dataset,
    idx: &[usize],
    tau_y: f64,
    base: &BaseMeasure,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    let d = data.p() + 1;
    let (mean, chol) = regression_posterior(data, idx, base)?;
    let z = standard_normal_vec(d, rng);
    let dev = chol
        .l_dirty()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| EdpmError::Matrix("singular Cholesky factor".into()))?;
    let beta = mean + dev * tau_y.sqrt();

    let xk = design_matrix(data, idx);
    let yk = DVector::from_iterator(idx.len(), idx.iter().map(|&i| data.y()[i]));
    let ssr = (&yk - &xk * &beta).norm_squared();
    let diff = &beta - DVector::from_column_slice(&base.hp.beta0);
    let quad = diff.dot(&(&base.c_y * &diff));
    let hp = &base.hp;
    let shape = hp.a_y + (idx.len() + d) as f64 / 2.0;
    let rate = hp.b_y + 0.5 * ssr + 0.5 * quad;
    let tau = 1.0 / gamma_rate(shape, rate)?.sample(rng);
    Ok((beta.iter().copied().collect(), tau))
}

/// Steps 1–2: regression coefficients, then response variances, per θ-cluster.
pub fn update_regression_atoms<R: Rng + ?Sized>(
    state: &mut GibbsState,
    data: &Dataset,
    base: &BaseMeasure,
    rng: &mut R,
) -> Result<()> {
    for (k, idx) in members_by_theta(state).iter().enumerate() {
        if idx.is_empty() {
            state.theta_atoms[k] = base.draw_theta(rng);
            continue;
        }
        let (beta, tau) = draw_regression_atom(data, idx, state.theta_atoms[k].tau_y, base, rng)?;
        state.theta_atoms[k].beta = beta;
        state.theta_atoms[k].tau_y = tau;
    }
    Ok(())
}

/// Mean and precision multiplier `n + c` of `μ | τ` for one covariate: the
/// conditional is `N((Σx + c m)/(n + c), τ/(n + c))`.
pub fn covariate_posterior(n: usize, sum_x: f64, l: usize, base: &BaseMeasure) -> (f64, f64) {
    let (c, m) = (base.hp.c_x[l], base.hp.m[l]);
    let k = n as f64 + c;
    ((sum_x + c * m) / k, k)
}

/// Draws one covariate of a ψ-atom given the values `xs` in its cell, `μ`
/// from [`covariate_posterior`] and then
/// `1/τ | μ ~ Gamma(a_x + (n+1)/2, b_x + ½ Σ (x − μ)² + ½ c (μ − m)²)`.
pub(crate) fn draw_covariate_param<R: Rng + ?Sized>(
    xs: impl Iterator<Item = f64> + Clone,
    tau: f64,
    l: usize,
    base: &BaseMeasure,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let hp = &base.hp;
    let (c, m) = (hp.c_x[l], hp.m[l]);
    let (n, sx) = xs.clone().fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    let (mean, k) = covariate_posterior(n, sx, l, base);
    let z: f64 = StandardNormal.sample(rng);
    let mu = mean + z * (tau / k).sqrt();
    let ss: f64 = xs.map(|x| (x - mu).powi(2)).sum();
    let shape = hp.a_x + (n as f64 + 1.0) / 2.0;
    let rate = hp.b_x + 0.5 * ss + 0.5 * c * (mu - m).powi(2);
    let tau = 1.0 / gamma_rate(shape, rate)?.sample(rng);
    Ok((mu, tau))
}

/// Steps 3–4: covariate means, then covariate variances, per (k, j, l).
pub fn update_covariate_atoms<R: Rng + ?Sized>(
    state: &mut GibbsState,
    data: &Dataset,
    base: &BaseMeasure,
    rng: &mut R,
) -> Result<()> {
    let cells = members_by_cell(state);
    for (k, row) in cells.iter().enumerate() {
        for (j, idx) in row.iter().enumerate() {
            if idx.is_empty() {
                state.psi_atoms[k][j] = base.draw_psi(rng);
                continue;
            }
            let atom = &mut state.psi_atoms[k][j];
            for l in 0..data.p() {
                let xs = idx.iter().map(|&i| data.row(i)[l]);
                let (mu, tau) = draw_covariate_param(xs, atom.tau_x[l], l, base, rng)?;
                atom.mu[l] = mu;
                atom.tau_x[l] = tau;
            }
        }
    }
    Ok(())
}

/// Log of the unnormalized joint assignment mass for every `(k, j)`,
/// row-major over `k`, written into `out` (length `N·M`). The common
/// `-(p+1)/2 · log 2π` is dropped.
pub struct AssignmentKernel {
    n: usize,
    m: usize,
    p: usize,
    /// `log p_k + log p_{j|k} − ½ Σ_l log τ_{x,kj,l}`, per cell.
    cell_const: Vec<f64>,
    mu: Vec<f64>,
    inv_tau_x: Vec<f64>,
    log_w_theta: Vec<f64>,
    half_log_tau_y: Vec<f64>,
    inv_tau_y: Vec<f64>,
}

impl AssignmentKernel {
    pub fn new(state: &GibbsState) -> Self {
        let (n, m) = (state.trunc.n(), state.trunc.m());
        let p = state.psi_atoms[0][0].mu.len();
        let mut cell_const = Vec::with_capacity(n * m);
        let mut mu = Vec::with_capacity(n * m * p);
        let mut inv_tau_x = Vec::with_capacity(n * m * p);
        for k in 0..n {
            let wk = state.psi_weights[k].weights();
            for j in 0..m {
                let a = &state.psi_atoms[k][j];
                let half_log_det: f64 = 0.5 * a.tau_x.iter().map(|t| t.ln()).sum::<f64>();
                cell_const.push(wk[j].ln() - half_log_det);
                mu.extend_from_slice(&a.mu);
                inv_tau_x.extend(a.tau_x.iter().map(|t| 1.0 / t));
            }
        }
        AssignmentKernel {
            n,
            m,
            p,
            cell_const,
            mu,
            inv_tau_x,
            log_w_theta: state.theta_weights.weights().iter().map(|w| w.ln()).collect(),
            half_log_tau_y: state.theta_atoms.iter().map(|a| 0.5 * a.tau_y.ln()).collect(),
            inv_tau_y: state.theta_atoms.iter().map(|a| 1.0 / a.tau_y).collect(),
        }
    }

    pub fn log_masses(&self, state: &GibbsState, x: &[f64], y: f64, out: &mut [f64]) {
        let (m, p) = (self.m, self.p);
        for k in 0..self.n {
            let r = y - state.theta_atoms[k].mean(x);
            let ly = self.log_w_theta[k] - self.half_log_tau_y[k] - 0.5 * r * r * self.inv_tau_y[k];
            for j in 0..m {
                let c = k * m + j;
                let mu = &self.mu[c * p..(c + 1) * p];
                let it = &self.inv_tau_x[c * p..(c + 1) * p];
                let mut q = 0.0;
                for l in 0..p {
                    let d = x[l] - mu[l];
                    q += d * d * it[l];
                }
                out[c] = ly + self.cell_const[c] - 0.5 * q;
            }
        }
    }
}

/// Step 5: each observation draws `(K_i, J_i)` from the `N × M` categorical
/// with mass `p_k p_{j|k} N(y_i; x*_i β_k, τ_{y,k}) ∏_l N(x_il; μ_{kj,l}, τ_{kj,l})`,
/// evaluated in the log domain.
pub fn update_assignments<R: Rng + ?Sized>(
    state: &mut GibbsState,
    data: &Dataset,
    rng: &mut R,
) -> Result<()> {
    let kernel = AssignmentKernel::new(state);
    let m = state.trunc.m();
    let mut buf = vec![0.0; state.trunc.n() * m];
    for i in 0..data.n() {
        kernel.log_masses(state, data.row(i), data.y()[i], &mut buf);
        let c = sample_log_categorical(&mut buf, rng)
            .map_err(|e| EdpmError::numerical(format!("observation {i}: {e}")))?;
        state.k[i] = c / m;
        state.j[i] = c % m;
    }
    Ok(())
}

/// Stick update shared by both levels:
/// `V_k ~ Beta(n_k + 1, α + Σ_{h>k} n_h)` for `k < len - 1`, last stick 1.
fn posterior_sticks<R: Rng + ?Sized>(counts: &[usize], alpha: f64, rng: &mut R) -> Result<StickWeights> {
    let len = counts.len();
    let mut tail: usize = counts.iter().sum();
    let mut v = Vec::with_capacity(len);
    for &c in &counts[..len - 1] {
        tail -= c;
        v.push(beta_dist(c as f64 + 1.0, alpha + tail as f64)?.sample(rng));
    }
    v.push(1.0);
    StickWeights::from_sticks(v)
}

/// Step 6.
pub fn update_theta_weights<R: Rng + ?Sized>(state: &mut GibbsState, rng: &mut R) -> Result<()> {
    let (nk, _) = state.counts()?;
    state.theta_weights = posterior_sticks(&nk, state.alpha_theta, rng)?;
    Ok(())
}

/// Step 7.
pub fn update_psi_weights<R: Rng + ?Sized>(state: &mut GibbsState, rng: &mut R) -> Result<()> {
    let (_, nkj) = state.counts()?;
    for (k, row) in nkj.iter().enumerate() {
        state.psi_weights[k] = posterior_sticks(row, state.alpha_psi[k], rng)?;
    }
    Ok(())
}

/// Step 8: `α^θ ~ Gamma(N + η_{y1} − 1, η_{y2} − Σ_{k<N} log(1 − V_k))`.
pub fn update_concentration_theta<R: Rng + ?Sized>(
    state: &mut GibbsState,
    base: &BaseMeasure,
    rng: &mut R,
) -> Result<()> {
    let hp = &base.hp;
    let n = state.trunc.n() as f64;
    let shape = n + hp.eta_y1 - 1.0;
    let rate = hp.eta_y2 - state.theta_weights.log_remaining_sum();
    state.alpha_theta = gamma_rate(shape, rate)?.sample(rng);
    Ok(())
}

/// Step 9. Per cluster: `α_k ~ Gamma(M + η_{x1} − 1, η_{x2} − Σ_{j<M} log(1 − V_{j|k}))`.
/// Shared: one draw from `Gamma(N(M − 1) + η_{x1}, η_{x2} − Σ_k Σ_{j<M} log(1 − V_{j|k}))`
/// copied to every cluster.
pub fn update_concentration_psi<R: Rng + ?Sized>(
    state: &mut GibbsState,
    base: &BaseMeasure,
    rng: &mut R,
) -> Result<()> {
    let hp = &base.hp;
    let (n, m) = (state.trunc.n() as f64, state.trunc.m() as f64);
    if hp.alpha_psi_shared {
        let shape = n * (m - 1.0) + hp.eta_x1;
        let rate = hp.eta_x2 - state.psi_weights.iter().map(StickWeights::log_remaining_sum).sum::<f64>();
        let a = gamma_rate(shape, rate)?.sample(rng);
        state.alpha_psi.iter_mut().for_each(|x| *x = a);
    } else {
        for (k, w) in state.psi_weights.iter().enumerate() {
            let shape = m + hp.eta_x1 - 1.0;
            let rate = hp.eta_x2 - w.log_remaining_sum();
            state.alpha_psi[k] = gamma_rate(shape, rate)?.sample(rng);
        }
    }
    Ok(())
}

/// Shape and rate of the step-8 conditional; exposed for tests and tooling.
pub fn concentration_theta_params(state: &GibbsState, base: &BaseMeasure) -> (f64, f64) {
    (
        state.trunc.n() as f64 + base.hp.eta_y1 - 1.0,
        base.hp.eta_y2 - state.theta_weights.log_remaining_sum(),
    )
}

/// Shape and rate of the shared step-9 conditional.
pub fn concentration_psi_shared_params(state: &GibbsState, base: &BaseMeasure) -> (f64, f64) {
    let (n, m) = (state.trunc.n() as f64, state.trunc.m() as f64);
    (
        n * (m - 1.0) + base.hp.eta_x1,
        base.hp.eta_x2 - state.psi_weights.iter().map(StickWeights::log_remaining_sum).sum::<f64>(),
    )
}
