//! L1 truncation error bounds for the truncated EDP prior.
//!
//! With `t = exp{-(N-1)/α^θ}` and `s = exp{-(M-1)/α^ψ}` the approximate bound
//! on the L1 distance between the truncated and untruncated marginal
//! densities of `n` observations is `4n [t + s (1 - t)]`. The exact quantity
//! it approximates, `4 [1 - E{(Σ_{k<N} p_k Σ_{j<M} p_{j|k})^n}]`, is
//! available as a Monte-Carlo estimate in [`exact_bound_mc`].

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::ChainDraw;
use crate::error::{EdpmError, Result};
use crate::rng;

/// Inputs of the bound: sample size, truncation, and concentrations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundQuery {
    pub n: usize,
    pub trunc_n: usize,
    pub trunc_m: usize,
    pub alpha_theta: f64,
    /// `α^ψ`, or the largest per-cluster `α^{ψ|θ}_k`.
    pub alpha_psi: f64,
}

impl BoundQuery {
    pub fn validate(&self) -> Result<()> {
        if self.trunc_n < 2 || self.trunc_m < 2 {
            return Err(EdpmError::domain(format!(
                "truncation (N={}, M={}) must be at least 2",
                self.trunc_n, self.trunc_m
            )));
        }
        for (name, a) in [("alpha_theta", self.alpha_theta), ("alpha_psi", self.alpha_psi)] {
            if !(a > 0.0 && a.is_finite()) {
                return Err(EdpmError::domain(format!("{name} = {a} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub bound: f64,
    /// `exp{-(N-1)/α^θ}`.
    pub theta_term: f64,
    /// `exp{-(M-1)/α^ψ}`.
    pub psi_term: f64,
}

pub fn l1_bound(q: &BoundQuery) -> Result<BoundResult> {
    q.validate()?;
    let theta_term = (-((q.trunc_n - 1) as f64) / q.alpha_theta).exp();
    let psi_term = (-((q.trunc_m - 1) as f64) / q.alpha_psi).exp();
    let bound = 4.0 * q.n as f64 * (theta_term + psi_term * (1.0 - theta_term));
    Ok(BoundResult {
        bound,
        theta_term,
        psi_term,
    })
}

/// Bound for cluster-specific `α^{ψ|θ}_k`: the ψ term uses the largest one.
/// `q.alpha_psi` is ignored.
pub fn l1_bound_varying(q: &BoundQuery, alpha_psi: &[f64]) -> Result<BoundResult> {
    if alpha_psi.is_empty() {
        return Err(EdpmError::domain("empty list of ψ concentrations"));
    }
    let alpha_max = alpha_psi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    l1_bound(&BoundQuery {
        alpha_psi: alpha_max,
        ..*q
    })
}

/// Monte-Carlo estimate and standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

const MC_SHARDS: u64 = 16;

/// Estimates `4 [1 - E{(Σ_{k<N} p_k Σ_{j<M} p_{j|k})^n}]` by simulating
/// stick-breaking weights only (atoms do not enter the expectation).
///
/// For each θ-stick, `1 - Σ_{j<M} p_{j|k} = ∏_{j<M} (1 - V_{j|k})`, which is
/// `exp(-G/α^ψ)` with `G ~ Gamma(M-1, 1)`; one Gamma draw replaces `M - 1`
/// Beta draws. Draws are split over fixed shards with independent streams
/// and combined in shard order, so the result does not depend on the thread
/// count.
pub fn exact_bound_mc<R: Rng + ?Sized>(
    q: &BoundQuery,
    draws: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    q.validate()?;
    if draws < 2 {
        return Err(EdpmError::domain("need at least 2 Monte-Carlo draws"));
    }
    let seed: u64 = rng.random();
    let gamma = Gamma::new((q.trunc_m - 1) as f64, 1.0)
        .map_err(|e| EdpmError::numerical(e.to_string()))?;
    let inv_at = 1.0 / q.alpha_theta;
    let inv_ap = 1.0 / q.alpha_psi;
    let n = q.n as f64;

    let partials: Vec<(f64, f64)> = (0..MC_SHARDS)
        .into_par_iter()
        .map(|shard| {
            let mut r = rng::stream(seed, shard);
            let lo = draws as u64 * shard / MC_SHARDS;
            let hi = draws as u64 * (shard + 1) / MC_SHARDS;
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in lo..hi {
                // T = 1 - S = ∏_{k<N}(1-V_k) + Σ_{k<N} p_k ∏_{j<M}(1-V_{j|k})
                let mut remaining = 1.0;
                let mut tail = 0.0;
                for _ in 0..q.trunc_n - 1 {
                    // 1 - V with V ~ Beta(1, α) is U^{1/α}
                    let u: f64 = 1.0 - r.random::<f64>();
                    let keep = (u.ln() * inv_at).exp();
                    let p_k = remaining * (1.0 - keep);
                    let g: f64 = gamma.sample(&mut r);
                    tail += p_k * (-g * inv_ap).exp();
                    remaining *= keep;
                }
                let t = (remaining + tail).min(1.0);
                // 1 - S^n, accurate when T is tiny
                let d = -(n * (-t).ln_1p()).exp_m1();
                s1 += d;
                s2 += d * d;
            }
            (s1, s2)
        })
        .collect();
    let (s1, s2) = partials
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let m = draws as f64;
    let mean = s1 / m;
    let var = ((s2 - m * mean * mean) / (m - 1.0)).max(0.0);
    Ok(McEstimate {
        estimate: 4.0 * mean,
        stderr: 4.0 * (var / m).sqrt(),
    })
}

/// Smallest `(N, M)`, each at least 2, such that `4n exp{-(N-1)/α^θ} ≤ ε/2`
/// and `4n exp{-(M-1)/α^ψ} ≤ ε/2`.
///
/// Each term gets half the budget. The `(1 - exp{-(N-1)/α^θ})` factor on the
/// ψ term is dropped during the search (it is at most 1); the full bound of
/// the returned pair is therefore at most ε.
pub fn min_truncation(n: usize, alpha_theta: f64, alpha_psi: f64, eps: f64) -> Result<(usize, usize)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(EdpmError::domain(format!("epsilon = {eps} must lie in (0, 1)")));
    }
    for (name, a) in [("alpha_theta", alpha_theta), ("alpha_psi", alpha_psi)] {
        if !(a > 0.0 && a.is_finite()) {
            return Err(EdpmError::domain(format!("{name} = {a} must be positive")));
        }
    }
    let half = eps / 2.0;
    let term_ok = |k: usize, a: f64| 4.0 * n as f64 * (-((k - 1) as f64) / a).exp() <= half;
    let smallest = |a: f64| {
        // closed-form start, then settle rounding at the boundary
        let guess = if n == 0 {
            2.0
        } else {
            (1.0 + a * (8.0 * n as f64 / eps).ln()).ceil().max(2.0)
        };
        let mut k = guess as usize;
        while k > 2 && term_ok(k - 1, a) {
            k -= 1;
        }
        while !term_ok(k, a) {
            k += 1;
        }
        k
    };
    let pair = (smallest(alpha_theta), smallest(alpha_psi));
    debug_assert!(
        l1_bound(&BoundQuery {
            n,
            trunc_n: pair.0,
            trunc_m: pair.1,
            alpha_theta,
            alpha_psi
        })
        .map(|r| r.bound <= eps)
        .unwrap_or(false)
    );
    Ok(pair)
}

/// Posterior means of `α^θ` and `max_k α^{ψ|θ}_k` over the given draws.
pub fn estimate_concentrations(draws: &[ChainDraw]) -> Result<(f64, f64)> {
    let at: Vec<f64> = draws.iter().map(|d| d.alpha_theta).collect();
    let ap: Vec<f64> = draws.iter().map(ChainDraw::alpha_psi_max).collect();
    estimate_concentrations_from_trace(&at, &ap)
}

pub fn estimate_concentrations_from_trace(alpha_theta: &[f64], alpha_psi_max: &[f64]) -> Result<(f64, f64)> {
    if alpha_theta.is_empty() || alpha_psi_max.is_empty() {
        return Err(EdpmError::domain("cannot estimate concentrations from an empty chain"));
    }
    Ok((crate::stats::mean(alpha_theta), crate::stats::mean(alpha_psi_max)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand_distr::Beta;

    fn q(n: usize, big_n: usize, m: usize, at: f64, ap: f64) -> BoundQuery {
        BoundQuery {
            n,
            trunc_n: big_n,
            trunc_m: m,
            alpha_theta: at,
            alpha_psi: ap,
        }
    }

    fn sig4(x: f64, target: f64) -> bool {
        let scale = 10f64.powi(target.abs().log10().floor() as i32 - 3);
        ((x / scale).round() - target / scale).abs() < 0.5
    }

    #[test]
    fn golden_values() {
        let cases = [
            (q(200, 10, 10, 0.5, 0.5), 2.437e-5),
            (q(200, 10, 50, 0.5, 3.0), 7.669e-5),
            (q(200, 50, 50, 3.0, 3.0), 1.290e-4),
            (q(1000, 50, 50, 3.0, 3.0), 6.451e-4),
        ];
        for (query, want) in cases {
            let got = l1_bound(&query).unwrap().bound;
            assert!(sig4(got, want), "{query:?}: {got:e} vs {want:e}");
        }
        assert_eq!(l1_bound(&q(0, 10, 10, 0.5, 0.5)).unwrap().bound, 0.0);
    }

    #[test]
    fn decomposition() {
        let r = l1_bound(&q(200, 10, 10, 0.5, 0.5)).unwrap();
        assert_eq!(r.bound, 800.0 * (r.theta_term + r.psi_term * (1.0 - r.theta_term)));
        assert!((r.theta_term - (-18.0f64).exp()).abs() < 1e-22);
    }

    #[test]
    fn invalid_queries() {
        assert!(l1_bound(&q(10, 1, 5, 1.0, 1.0)).is_err());
        assert!(l1_bound(&q(10, 5, 5, 0.0, 1.0)).is_err());
    }

    #[test]
    fn varying_uses_the_max() {
        let base = q(200, 10, 50, 0.5, f64::NAN);
        let r = l1_bound_varying(&base, &[0.5, 3.0]).unwrap();
        assert!(sig4(r.bound, 7.669e-5));
        let same = l1_bound_varying(&base, &[1.2; 5]).unwrap();
        assert_eq!(same, l1_bound(&q(200, 10, 50, 0.5, 1.2)).unwrap());
        let bumped = l1_bound_varying(&base, &[0.9, 3.0]).unwrap();
        assert_eq!(bumped, r);
        assert!(l1_bound_varying(&base, &[]).is_err());
    }

    fn brute_min(n: usize, a: f64, eps: f64) -> usize {
        (2..10_000)
            .find(|&k| 4.0 * n as f64 * (-((k - 1) as f64) / a).exp() <= eps / 2.0)
            .unwrap()
    }

    #[test]
    fn min_truncation_examples() {
        assert_eq!(min_truncation(200, 0.5, 0.5, 0.01).unwrap(), (7, 7));
        assert_eq!(min_truncation(2000, 3.0, 3.0, 0.01).unwrap(), (44, 44));
        // Published tables list (8, 41) here; the half-budget rule needs
        // M = 42 because 4000·exp(-40/3) = 6.5e-3 > 5e-3.
        let got = min_truncation(1000, 0.5, 3.0, 0.01).unwrap();
        assert_eq!(got, (brute_min(1000, 0.5, 0.01), brute_min(1000, 3.0, 0.01)));
        assert_eq!(got, (8, 42));
        assert_eq!(min_truncation(0, 0.5, 0.5, 0.01).unwrap(), (2, 2));
        assert!(min_truncation(10, 1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn concentration_estimates() {
        let (a, b) = estimate_concentrations_from_trace(&[0.5; 10], &[0.9; 10]).unwrap();
        assert!((a - 0.5).abs() < 1e-15 && (b - 0.9).abs() < 1e-15);
        assert!(estimate_concentrations_from_trace(&[], &[]).is_err());
        let mut r = stream(3, 0);
        let g = Gamma::new(1.0, 1.0).unwrap();
        let xs: Vec<f64> = (0..10_000).map(|_| g.sample(&mut r)).collect();
        let (m, _) = estimate_concentrations_from_trace(&xs, &xs).unwrap();
        let se = crate::stats::sample_sd(&xs) / 100.0;
        assert!((m - 1.0).abs() < 3.0 * se);
    }

    #[test]
    fn mc_single_observation_closed_form() {
        // n = 1: E[T] = 1 - (1 - a_θ^{N-1})(1 - a_ψ^{M-1}), a = α/(1+α)
        for (big_n, m, at, ap) in [(2, 2, 1e-3, 1e-3), (4, 3, 0.7, 2.0), (6, 6, 1.0, 1.0)] {
            let query = q(1, big_n, m, at, ap);
            let est = exact_bound_mc(&query, 400_000, &mut stream(12, 0)).unwrap();
            let a = |x: f64, k: usize| (x / (1.0 + x)).powi(k as i32 - 1);
            let exact = 4.0 * (1.0 - (1.0 - a(at, big_n)) * (1.0 - a(ap, m)));
            assert!((est.estimate - exact).abs() < 4.0 * est.stderr, "{est:?} vs {exact}");
        }
    }

    #[test]
    fn mc_large_concentration_saturates() {
        let est = exact_bound_mc(&q(200, 2, 2, 1e6, 1e6), 1000, &mut stream(1, 0)).unwrap();
        assert!((est.estimate - 4.0).abs() < 1e-6, "{est:?}");
    }

    /// Independent route: explicit Beta sticks at both levels.
    fn naive_mc(q: &BoundQuery, draws: usize, seed: u64) -> (f64, f64) {
        let mut r = stream(seed, 99);
        let bt = Beta::new(1.0, q.alpha_theta).unwrap();
        let bp = Beta::new(1.0, q.alpha_psi).unwrap();
        let mut vals = Vec::with_capacity(draws);
        for _ in 0..draws {
            let mut rem = 1.0;
            let mut s = 0.0;
            for _ in 0..q.trunc_n - 1 {
                let v: f64 = bt.sample(&mut r);
                let pk = rem * v;
                rem *= 1.0 - v;
                let mut rem_psi = 1.0;
                let mut inner = 0.0;
                for _ in 0..q.trunc_m - 1 {
                    let w: f64 = bp.sample(&mut r);
                    inner += rem_psi * w;
                    rem_psi *= 1.0 - w;
                }
                s += pk * inner;
            }
            vals.push(4.0 * (1.0 - s.powi(q.n as i32)));
        }
        let m = crate::stats::mean(&vals);
        (m, crate::stats::sample_sd(&vals) / (draws as f64).sqrt())
    }

    #[test]
    fn mc_agrees_with_naive_sticks() {
        for query in [q(20, 4, 5, 1.0, 2.0), q(200, 7, 7, 0.5, 0.5), q(50, 6, 3, 2.0, 0.7)] {
            let fast = exact_bound_mc(&query, 200_000, &mut stream(2, 0)).unwrap();
            let (slow, slow_se) = naive_mc(&query, 50_000, 5);
            let se = (fast.stderr.powi(2) + slow_se.powi(2)).sqrt();
            assert!((fast.estimate - slow).abs() < 4.0 * se, "{query:?}: {fast:?} vs {slow} ± {slow_se}");
        }
    }

    #[test]
    fn mc_respects_jensen_upper_bound() {
        // E[S^n] ≥ (E S)^n with E S = (1 - r_θ^{N-1})(1 - r_ψ^{M-1}), r = α/(1+α).
        for query in [q(200, 10, 10, 0.5, 0.5), q(1000, 20, 30, 1.5, 3.0)] {
            let rt = query.alpha_theta / (1.0 + query.alpha_theta);
            let rp = query.alpha_psi / (1.0 + query.alpha_psi);
            let es = (1.0 - rt.powi(query.trunc_n as i32 - 1)) * (1.0 - rp.powi(query.trunc_m as i32 - 1));
            let upper = 4.0 * (1.0 - es.powi(query.n as i32));
            let est = exact_bound_mc(&query, 100_000, &mut stream(4, 0)).unwrap();
            assert!(est.estimate <= upper + 3.0 * est.stderr, "{est:?} vs {upper}");
        }
    }

    #[test]
    fn mc_stderr_scales_as_inverse_root() {
        let query = q(200, 6, 6, 1.0, 1.0);
        let a = exact_bound_mc(&query, 100_000, &mut stream(6, 0)).unwrap();
        let b = exact_bound_mc(&query, 200_000, &mut stream(7, 0)).unwrap();
        let ratio = a.stderr / b.stderr;
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn mc_is_deterministic() {
        let query = q(100, 5, 5, 1.0, 1.0);
        let a = exact_bound_mc(&query, 10_000, &mut stream(8, 0)).unwrap();
        let b = exact_bound_mc(&query, 10_000, &mut stream(8, 0)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn monotone_in_truncation(n in 1usize..5000, big_n in 2usize..60, m in 2usize..60,
                                  at in 0.1f64..5.0, ap in 0.1f64..5.0) {
            let b = l1_bound(&q(n, big_n, m, at, ap)).unwrap().bound;
            let bn = l1_bound(&q(n, big_n + 1, m, at, ap)).unwrap().bound;
            let bm = l1_bound(&q(n, big_n, m + 1, at, ap)).unwrap().bound;
            let t = |big_n, m| l1_bound(&q(n, big_n, m, at, ap)).unwrap();
            prop_assert!(bn <= b && bm <= b);
            let (r, rn, rm) = (t(big_n, m), t(big_n + 1, m), t(big_n, m + 1));
            prop_assume!(r.theta_term > 1e-300 && r.psi_term > 1e-300);
            prop_assert!(rn.theta_term < r.theta_term);
            prop_assert!(rm.psi_term < r.psi_term);
        }

        #[test]
        fn linear_in_n(n in 1usize..100_000, big_n in 2usize..40, m in 2usize..40,
                       at in 0.1f64..5.0, ap in 0.1f64..5.0) {
            let b1 = l1_bound(&q(n, big_n, m, at, ap)).unwrap().bound;
            let b2 = l1_bound(&q(2 * n, big_n, m, at, ap)).unwrap().bound;
            prop_assume!(b1 > 0.0);
            prop_assert!((b2 / b1 - 2.0).abs() < 1e-12);
        }

        #[test]
        fn min_truncation_feasible_and_minimal(n in 1usize..5000, at in 0.1f64..5.0,
                                               ap in 0.1f64..5.0, eps in 1e-4f64..0.5) {
            let (big_n, m) = min_truncation(n, at, ap, eps).unwrap();
            prop_assert!(l1_bound(&q(n, big_n, m, at, ap)).unwrap().bound <= eps);
            let term = |k: usize, a: f64| 4.0 * n as f64 * (-((k - 1) as f64) / a).exp();
            if big_n > 2 { prop_assert!(term(big_n - 1, at) > eps / 2.0); }
            if m > 2 { prop_assert!(term(m - 1, ap) > eps / 2.0); }
        }

        #[test]
        fn varying_dominates_members(alphas in prop::collection::vec(0.1f64..5.0, 1..10),
                                     n in 1usize..1000, big_n in 2usize..30, m in 2usize..30) {
            let base = q(n, big_n, m, 1.0, 1.0);
            let v = l1_bound_varying(&base, &alphas).unwrap().bound;
            for &a in &alphas {
                prop_assert!(v >= l1_bound(&q(n, big_n, m, 1.0, a)).unwrap().bound);
            }
        }
    }
}
