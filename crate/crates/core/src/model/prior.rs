//! Hyperparameters, cluster atoms, and the conjugate base measure.
//!
//! Parameterization: `IG(a, b)` means `1/τ ~ Gamma(shape a, rate b)`; every
//! Gamma in this crate is shape–rate. The regression atom prior is
//! `β | τ_y ~ N(β_0, τ_y C_y^{-1})`, `τ_y ~ IG(a_y, b_y)`, and each covariate
//! gets `μ_l | τ_l ~ N(m_l, τ_l / c_l)`, `τ_l ~ IG(a_x, b_x)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{EdpmError, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Truncation levels `(N, M)` of the θ- and ψ-level sticks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    n: usize,
    m: usize,
}

impl Truncation {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n < 2 || m < 2 {
            return Err(EdpmError::domain(format!(
                "truncation (N={n}, M={m}) must have N >= 2 and M >= 2"
            )));
        }
        Ok(Truncation { n, m })
    }

    /// Number of θ-clusters.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of ψ-clusters inside each θ-cluster.
    pub fn m(&self) -> usize {
        self.m
    }
}

/// Regression atom `θ = (β, τ_y)`; `beta[0]` is the intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaAtom {
    pub beta: Vec<f64>,
    pub tau_y: f64,
}

impl ThetaAtom {
    pub fn mean(&self, x: &[f64]) -> f64 {
        super::design_dot(x, &self.beta)
    }

    pub fn log_density(&self, x: &[f64], y: f64) -> f64 {
        let r = y - self.mean(x);
        -0.5 * (LN_2PI + self.tau_y.ln() + r * r / self.tau_y)
    }
}

/// Covariate atom: per-covariate normal means and variances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiAtom {
    pub mu: Vec<f64>,
    pub tau_x: Vec<f64>,
}

impl PsiAtom {
    pub fn log_density(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.mu.iter().zip(&self.tau_x))
            .map(|(&xl, (&m, &t))| {
                let r = xl - m;
                -0.5 * (LN_2PI + t.ln() + r * r / t)
            })
            .sum()
    }
}

/// Base-measure constants and the Gamma hyperpriors on the concentrations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    pub beta0: Vec<f64>,
    /// Prior precision multiplier of β, `(p+1) × (p+1)`, positive definite.
    pub c_y: Vec<Vec<f64>>,
    pub a_y: f64,
    pub b_y: f64,
    pub m: Vec<f64>,
    pub c_x: Vec<f64>,
    pub a_x: f64,
    pub b_x: f64,
    pub eta_y1: f64,
    pub eta_y2: f64,
    pub eta_x1: f64,
    pub eta_x2: f64,
    /// One `α^ψ` shared by every θ-cluster instead of one per cluster.
    #[serde(default)]
    pub alpha_psi_shared: bool,
}

impl Hyperparameters {
    /// Weakly informative defaults for `p` covariates centred at the origin.
    pub fn default_for(p: usize) -> Self {
        let mut c_y = vec![vec![0.0; p + 1]; p + 1];
        for (i, row) in c_y.iter_mut().enumerate() {
            row[i] = 0.1;
        }
        Hyperparameters {
            beta0: vec![0.0; p + 1],
            c_y,
            a_y: 2.0,
            b_y: 2.0,
            m: vec![0.0; p],
            c_x: vec![0.5; p],
            a_x: 2.0,
            b_x: 2.0,
            eta_y1: 1.0,
            eta_y2: 1.0,
            eta_x1: 1.0,
            eta_x2: 1.0,
            alpha_psi_shared: false,
        }
    }

    pub fn p(&self) -> usize {
        self.m.len()
    }

    /// Validates against `p` covariates and factorizes `C_y`.
    pub fn prepare(&self, p: usize) -> Result<BaseMeasure> {
        BaseMeasure::new(self, p)
    }
}

/// Validated hyperparameters with the factorizations the samplers reuse.
#[derive(Clone, Debug)]
pub struct BaseMeasure {
    pub hp: Hyperparameters,
    pub(crate) c_y: DMatrix<f64>,
    c_y_chol: Cholesky<f64, Dyn>,
    /// `C_y β_0`.
    pub(crate) c_y_beta0: DVector<f64>,
    inv_gamma_y: Gamma<f64>,
    inv_gamma_x: Gamma<f64>,
}

impl BaseMeasure {
    fn new(hp: &Hyperparameters, p: usize) -> Result<Self> {
        let d = p + 1;
        let bad = |what: &str| Err(EdpmError::domain(format!("hyperparameters: {what}")));
        if hp.beta0.len() != d {
            return bad(&format!("beta0 has length {}, expected {d}", hp.beta0.len()));
        }
        if hp.m.len() != p || hp.c_x.len() != p {
            return bad(&format!("m and c_x must have length {p}"));
        }
        if hp.c_y.len() != d || hp.c_y.iter().any(|r| r.len() != d) {
            return bad(&format!("c_y must be {d}×{d}"));
        }
        let scalars = [
            ("a_y", hp.a_y),
            ("b_y", hp.b_y),
            ("a_x", hp.a_x),
            ("b_x", hp.b_x),
            ("eta_y1", hp.eta_y1),
            ("eta_y2", hp.eta_y2),
            ("eta_x1", hp.eta_x1),
            ("eta_x2", hp.eta_x2),
        ];
        for (name, v) in scalars {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} = {v} must be positive"));
            }
        }
        if hp.c_x.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return bad("c_x entries must be positive");
        }
        if hp.beta0.iter().chain(&hp.m).any(|v| !v.is_finite()) {
            return bad("non-finite location");
        }
        let c_y = DMatrix::from_fn(d, d, |i, j| hp.c_y[i][j]);
        if (&c_y - c_y.transpose()).amax() > 1e-10 * (1.0 + c_y.amax()) {
            return Err(EdpmError::Matrix("c_y is not symmetric".into()));
        }
        let c_y_chol = Cholesky::new(c_y.clone())
            .ok_or_else(|| EdpmError::Matrix("c_y is not positive definite".into()))?;
        let beta0 = DVector::from_column_slice(&hp.beta0);
        let c_y_beta0 = &c_y * &beta0;
        Ok(BaseMeasure {
            hp: hp.clone(),
            c_y,
            c_y_chol,
            c_y_beta0,
            inv_gamma_y: gamma_rate(hp.a_y, hp.b_y)?,
            inv_gamma_x: gamma_rate(hp.a_x, hp.b_x)?,
        })
    }

    pub fn p(&self) -> usize {
        self.hp.m.len()
    }

    pub fn draw_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> ThetaAtom {
        let tau_y = 1.0 / self.inv_gamma_y.sample(rng);
        // β = β_0 + sqrt(τ) L^{-T} z gives covariance τ (L Lᵀ)^{-1} = τ C^{-1}.
        let z = standard_normal_vec(self.p() + 1, rng);
        let dev = self
            .c_y_chol
            .l_dirty()
            .transpose()
            .solve_upper_triangular(&z)
            .expect("Cholesky factor has a positive diagonal");
        let s = tau_y.sqrt();
        let beta = self
            .hp
            .beta0
            .iter()
            .zip(dev.iter())
            .map(|(b, e)| b + s * e)
            .collect();
        ThetaAtom { beta, tau_y }
    }

    pub fn draw_psi<R: Rng + ?Sized>(&self, rng: &mut R) -> PsiAtom {
        let p = self.p();
        let mut mu = Vec::with_capacity(p);
        let mut tau_x = Vec::with_capacity(p);
        for l in 0..p {
            let t = 1.0 / self.inv_gamma_x.sample(rng);
            let z: f64 = StandardNormal.sample(rng);
            mu.push(self.hp.m[l] + z * (t / self.hp.c_x[l]).sqrt());
            tau_x.push(t);
        }
        PsiAtom { mu, tau_x }
    }

    /// Log of the `C_y` determinant, from the Cholesky diagonal.
    pub fn log_det_c_y(&self) -> f64 {
        2.0 * self.c_y_chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }
}

/// Draws `(θ, ψ)` from the base measure; see the module docs for the layout.
pub fn draw_from_base_measure<R: Rng + ?Sized>(
    hp: &Hyperparameters,
    p: usize,
    rng: &mut R,
) -> Result<(ThetaAtom, PsiAtom)> {
    let base = hp.prepare(p)?;
    let theta = base.draw_theta(rng);
    let psi = base.draw_psi(rng);
    Ok((theta, psi))
}

/// `Gamma(shape, rate)`.
pub fn gamma_rate(shape: f64, rate: f64) -> Result<Gamma<f64>> {
    Gamma::new(shape, 1.0 / rate)
        .map_err(|e| EdpmError::numerical(format!("Gamma(shape {shape}, rate {rate}): {e}")))
}

pub(crate) fn standard_normal_vec<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(len, |_, _| StandardNormal.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hp2() -> Hyperparameters {
        let mut hp = Hyperparameters::default_for(2);
        hp.beta0 = vec![1.0, -2.0, 0.5];
        hp.c_y = vec![
            vec![2.0, 0.5, 0.0],
            vec![0.5, 1.0, 0.2],
            vec![0.0, 0.2, 3.0],
        ];
        hp.m = vec![4.0, -1.0];
        hp.c_x = vec![0.5, 2.0];
        hp.a_y = 3.0;
        hp.b_y = 2.0;
        hp
    }

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn truncation_rejects_degenerate_levels() {
        assert!(Truncation::new(1, 5).is_err());
        assert!(Truncation::new(5, 1).is_err());
        assert!(Truncation::new(2, 2).is_ok());
    }

    #[test]
    fn deterministic_given_seed() {
        let hp = hp2();
        let a = draw_from_base_measure(&hp, 2, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = draw_from_base_measure(&hp, 2, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_indefinite_c_y() {
        let mut hp = hp2();
        hp.c_y[0][0] = -1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            draw_from_base_measure(&hp, 2, &mut rng),
            Err(EdpmError::Matrix(_))
        ));
        let mut hp = hp2();
        hp.a_x = 0.0;
        assert!(hp.prepare(2).is_err());
    }

    #[test]
    fn huge_c_x_pins_mu_to_m() {
        let mut hp = hp2();
        hp.c_x = vec![1e14, 1e14];
        let base = hp.prepare(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let psi = base.draw_psi(&mut rng);
            assert!((psi.mu[0] - 4.0).abs() < 1e-4);
            assert!((psi.mu[1] + 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn inverse_gamma_mean() {
        // E[τ] = b / (a - 1) = 1 for IG(3, 2).
        let base = hp2().prepare(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let taus: Vec<f64> = (0..1_000_000).map(|_| base.draw_theta(&mut rng).tau_y).collect();
        let (m, se) = mean_and_se(&taus);
        assert!((m - 1.0).abs() < 3.0 * se, "mean {m} se {se}");
    }

    #[test]
    fn location_moments() {
        let base = hp2().prepare(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let draws = 100_000;
        let mut betas = vec![Vec::with_capacity(draws); 3];
        let mut mus = vec![Vec::with_capacity(draws); 2];
        for _ in 0..draws {
            let (t, s) = (base.draw_theta(&mut rng), base.draw_psi(&mut rng));
            for (c, b) in betas.iter_mut().zip(&t.beta) {
                c.push(*b);
            }
            for (c, m) in mus.iter_mut().zip(&s.mu) {
                c.push(*m);
            }
        }
        for (c, target) in betas.iter().zip([1.0, -2.0, 0.5]) {
            let (m, se) = mean_and_se(c);
            assert!((m - target).abs() < 3.0 * se, "beta mean {m} vs {target}");
        }
        for (c, target) in mus.iter().zip([4.0, -1.0]) {
            let (m, se) = mean_and_se(c);
            assert!((m - target).abs() < 3.0 * se, "mu mean {m} vs {target}");
        }
    }

    #[test]
    fn beta_covariance_is_tau_times_c_inverse() {
        // Cov(β) = E[τ] C^{-1} with E[τ] = 1.
        let hp = hp2();
        let base = hp.prepare(2).unwrap();
        let c_inv = base.c_y.clone().try_inverse().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let draws = 200_000;
        let mut acc = DMatrix::<f64>::zeros(3, 3);
        for _ in 0..draws {
            let t = base.draw_theta(&mut rng);
            let d = DVector::from_iterator(3, t.beta.iter().zip(&hp.beta0).map(|(b, b0)| b - b0));
            acc += &d * d.transpose();
        }
        acc /= draws as f64;
        assert!((&acc - &c_inv).amax() < 0.1 * c_inv.amax(), "{acc} vs {c_inv}");
    }
}
