use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::{BaseMeasure, PsiAtom, StickWeights, ThetaAtom, Truncation, PROB_TOL};
use crate::error::{EdpmError, Result};
use crate::model::prior::gamma_rate;

/// Full state of the truncated sampler. Labels are 0-based:
/// `k[i] ∈ 0..N`, `j[i] ∈ 0..M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsState {
    pub trunc: Truncation,
    pub theta_weights: StickWeights,
    pub psi_weights: Vec<StickWeights>,
    pub theta_atoms: Vec<ThetaAtom>,
    /// `psi_atoms[k][j]`.
    pub psi_atoms: Vec<Vec<PsiAtom>>,
    pub k: Vec<usize>,
    pub j: Vec<usize>,
    pub alpha_theta: f64,
    /// One entry per θ-cluster; all equal when the concentration is shared.
    pub alpha_psi: Vec<f64>,
}

impl GibbsState {
    /// Draws concentrations, sticks and atoms from the prior. Every
    /// observation starts in cell `(0, 0)`.
    pub fn from_prior<R: Rng + ?Sized>(
        base: &BaseMeasure,
        trunc: Truncation,
        n_obs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let hp = &base.hp;
        let alpha_theta = gamma_rate(hp.eta_y1, hp.eta_y2)?.sample(rng);
        let ga = gamma_rate(hp.eta_x1, hp.eta_x2)?;
        let alpha_psi = if hp.alpha_psi_shared {
            vec![ga.sample(rng); trunc.n()]
        } else {
            (0..trunc.n()).map(|_| ga.sample(rng)).collect()
        };
        let theta_weights = StickWeights::from_prior(trunc.n(), alpha_theta, rng)?;
        let psi_weights = alpha_psi
            .iter()
            .map(|&a| StickWeights::from_prior(trunc.m(), a, rng))
            .collect::<Result<Vec<_>>>()?;
        let theta_atoms = (0..trunc.n()).map(|_| base.draw_theta(rng)).collect();
        let psi_atoms = (0..trunc.n())
            .map(|_| (0..trunc.m()).map(|_| base.draw_psi(rng)).collect())
            .collect();
        Ok(GibbsState {
            trunc,
            theta_weights,
            psi_weights,
            theta_atoms,
            psi_atoms,
            k: vec![0; n_obs],
            j: vec![0; n_obs],
            alpha_theta,
            alpha_psi,
        })
    }

    pub fn counts(&self) -> Result<(Vec<usize>, Vec<Vec<usize>>)> {
        occupancy_counts(&self.k, &self.j, self.trunc)
    }

    pub fn alpha_psi_max(&self) -> f64 {
        self.alpha_psi.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Structural and numerical invariants; `Err` names the first violation.
    pub fn check(&self) -> Result<()> {
        let (n, m) = (self.trunc.n(), self.trunc.m());
        let fail = |msg: String| Err(EdpmError::numerical(msg));
        if self.theta_weights.len() != n
            || self.psi_weights.len() != n
            || self.theta_atoms.len() != n
            || self.psi_atoms.len() != n
            || self.alpha_psi.len() != n
        {
            return fail("θ-level arrays do not have length N".into());
        }
        let unit = |w: &[f64]| {
            w.iter().all(|&x| x >= 0.0 && x.is_finite())
                && (w.iter().sum::<f64>() - 1.0).abs() < 1e3 * PROB_TOL
        };
        if !unit(self.theta_weights.weights()) {
            return fail("θ weights are not a probability vector".into());
        }
        for (k, w) in self.psi_weights.iter().enumerate() {
            if w.len() != m || !unit(w.weights()) {
                return fail(format!("ψ weights of cluster {k} are not a probability vector"));
            }
        }
        for (k, a) in self.theta_atoms.iter().enumerate() {
            if !(a.tau_y > 0.0 && a.tau_y.is_finite()) || a.beta.iter().any(|b| !b.is_finite()) {
                return fail(format!("θ-atom {k} is not finite/positive"));
            }
        }
        for (k, row) in self.psi_atoms.iter().enumerate() {
            if row.len() != m {
                return fail(format!("ψ-atom row {k} does not have length M"));
            }
            for (j, a) in row.iter().enumerate() {
                if a.tau_x.iter().any(|t| !(*t > 0.0 && t.is_finite()))
                    || a.mu.iter().any(|v| !v.is_finite())
                {
                    return fail(format!("ψ-atom ({k}, {j}) is not finite/positive"));
                }
            }
        }
        if !(self.alpha_theta > 0.0 && self.alpha_theta.is_finite())
            || self.alpha_psi.iter().any(|a| !(*a > 0.0 && a.is_finite()))
        {
            return fail("concentration not finite/positive".into());
        }
        if self.k.len() != self.j.len() {
            return fail("label vectors differ in length".into());
        }
        let (nk, nkj) = self.counts()?;
        debug_assert_eq!(nk.iter().sum::<usize>(), self.k.len());
        debug_assert!(nk.iter().zip(&nkj).all(|(a, row)| row.iter().sum::<usize>() == *a));
        Ok(())
    }
}

/// Tallies `n_k = #{i: K_i = k}` and `n_kj = #{i: K_i = k, J_i = j}`.
pub fn occupancy_counts(
    k: &[usize],
    j: &[usize],
    trunc: Truncation,
) -> Result<(Vec<usize>, Vec<Vec<usize>>)> {
    if k.len() != j.len() {
        return Err(EdpmError::domain(format!(
            "{} θ-labels but {} ψ-labels",
            k.len(),
            j.len()
        )));
    }
    let mut nk = vec![0usize; trunc.n()];
    let mut nkj = vec![vec![0usize; trunc.m()]; trunc.n()];
    for (i, (&ki, &ji)) in k.iter().zip(j).enumerate() {
        if ki >= trunc.n() || ji >= trunc.m() {
            return Err(EdpmError::domain(format!(
                "observation {i} has label ({ki}, {ji}) outside {}×{}",
                trunc.n(),
                trunc.m()
            )));
        }
        nk[ki] += 1;
        nkj[ki][ji] += 1;
    }
    Ok((nk, nkj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_tally() {
        // 1-based (1,1),(1,2),(2,1) in the text form.
        let t = Truncation::new(2, 2).unwrap();
        let (nk, nkj) = occupancy_counts(&[0, 0, 1], &[0, 1, 0], t).unwrap();
        assert_eq!(nk, vec![2, 1]);
        assert_eq!(nkj, vec![vec![1, 1], vec![1, 0]]);
    }

    #[test]
    fn empty_and_out_of_range() {
        let t = Truncation::new(3, 4).unwrap();
        let (nk, nkj) = occupancy_counts(&[], &[], t).unwrap();
        assert_eq!(nk, vec![0; 3]);
        assert!(nkj.iter().flatten().all(|&c| c == 0));
        assert!(matches!(
            occupancy_counts(&[3], &[0], t),
            Err(EdpmError::Domain(_))
        ));
        assert!(occupancy_counts(&[0], &[4], t).is_err());
    }

    #[test]
    fn matches_hashmap_tally() {
        use std::collections::HashMap;
        let t = Truncation::new(7, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k: Vec<usize> = (0..1000).map(|_| rand::Rng::random_range(&mut rng, 0..7)).collect();
        let j: Vec<usize> = (0..1000).map(|_| rand::Rng::random_range(&mut rng, 0..5)).collect();
        let mut oracle: HashMap<(usize, usize), usize> = HashMap::new();
        for pair in k.iter().copied().zip(j.iter().copied()) {
            *oracle.entry(pair).or_default() += 1;
        }
        let (nk, nkj) = occupancy_counts(&k, &j, t).unwrap();
        for a in 0..7 {
            let row_total: usize = (0..5).map(|b| oracle.get(&(a, b)).copied().unwrap_or(0)).sum();
            assert_eq!(nk[a], row_total);
            for b in 0..5 {
                assert_eq!(nkj[a][b], oracle.get(&(a, b)).copied().unwrap_or(0));
            }
        }
        assert_eq!(nk.iter().sum::<usize>(), 1000);
    }

    proptest! {
        #[test]
        fn permutation_invariant(labels in prop::collection::vec((0usize..4, 0usize..3), 0..60), seed in any::<u64>()) {
            let t = Truncation::new(4, 3).unwrap();
            let (k, j): (Vec<_>, Vec<_>) = labels.iter().copied().unzip();
            let mut perm = labels.clone();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let (pk, pj): (Vec<_>, Vec<_>) = perm.into_iter().unzip();
            prop_assert_eq!(occupancy_counts(&k, &j, t).unwrap(), occupancy_counts(&pk, &pj, t).unwrap());
        }
    }
}
