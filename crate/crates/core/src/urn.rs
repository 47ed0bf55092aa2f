//! Marginal Pólya-urn sampler for the untruncated model.
//!
//! Labels are updated one observation at a time with auxiliary components
//! (`m_aux` per level): an observation joins an existing θ-cluster and,
//! inside it, an existing or auxiliary ψ-cluster, or it opens a new
//! θ-cluster together with its first ψ-cluster, all in one categorical draw.
//! When an observation leaves a cluster it was alone in, that cluster's
//! atoms become the first auxiliary, which keeps the update reversible.
//!
//! Concentrations use the auxiliary-variable Gamma update: for each group of
//! `n` observations in `J` clusters, `w ~ Beta(α + 1, n)` and
//! `s ~ Bernoulli(n / (n + α))`, then
//! `α ~ Gamma(a + ΣJ − Σs, b − Σ log w)`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::chain::{Chain, ChainDraw, Representation};
use crate::error::{EdpmError, Result};
use crate::gibbs::{draw_covariate_param, draw_regression_atom};
use crate::model::prior::gamma_rate;
use crate::model::{beta_dist, BaseMeasure, Dataset, Hyperparameters, PsiAtom, ThetaAtom};
use crate::rng::{stream, ChainRng};
use crate::stats::sample_log_categorical;

#[derive(Clone, Debug, PartialEq)]
pub struct PsiCluster {
    pub atom: PsiAtom,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThetaCluster {
    pub atom: ThetaAtom,
    pub alpha_psi: f64,
    pub psi: Vec<PsiCluster>,
    pub size: usize,
}

/// Occupied clusters and labels. `k[i]` indexes `clusters`, `j[i]` indexes
/// `clusters[k[i]].psi`.
#[derive(Clone, Debug, PartialEq)]
pub struct UrnState {
    pub clusters: Vec<ThetaCluster>,
    pub k: Vec<usize>,
    pub j: Vec<usize>,
    pub alpha_theta: f64,
}

impl UrnState {
    /// Every observation in one θ- and one ψ-cluster; atoms and
    /// concentrations from the prior.
    pub fn single_cluster<R: Rng + ?Sized>(base: &BaseMeasure, n: usize, rng: &mut R) -> Result<Self> {
        let hp = &base.hp;
        let alpha_theta = gamma_rate(hp.eta_y1, hp.eta_y2)?.sample(rng);
        let alpha_psi = gamma_rate(hp.eta_x1, hp.eta_x2)?.sample(rng);
        let clusters = if n == 0 {
            Vec::new()
        } else {
            vec![ThetaCluster {
                atom: base.draw_theta(rng),
                alpha_psi,
                psi: vec![PsiCluster { atom: base.draw_psi(rng), size: n }],
                size: n,
            }]
        };
        Ok(UrnState {
            clusters,
            k: vec![0; n],
            j: vec![0; n],
            alpha_theta,
        })
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// Labels, sizes and member sets agree, and no cluster is empty.
    pub fn check(&self) -> Result<()> {
        let fail = |m: String| Err(EdpmError::numerical(m));
        let mut nk = vec![0usize; self.clusters.len()];
        let mut nkj: Vec<Vec<usize>> = self.clusters.iter().map(|c| vec![0; c.psi.len()]).collect();
        for (&k, &j) in self.k.iter().zip(&self.j) {
            if k >= nk.len() || j >= nkj[k].len() {
                return fail(format!("label ({k}, {j}) out of range"));
            }
            nk[k] += 1;
            nkj[k][j] += 1;
        }
        for (k, c) in self.clusters.iter().enumerate() {
            if c.size == 0 || c.size != nk[k] {
                return fail(format!("θ-cluster {k} size {} but {} members", c.size, nk[k]));
            }
            for (j, p) in c.psi.iter().enumerate() {
                if p.size == 0 || p.size != nkj[k][j] {
                    return fail(format!("ψ-cluster ({k}, {j}) size {} but {} members", p.size, nkj[k][j]));
                }
            }
            if !(c.alpha_psi > 0.0 && c.alpha_psi.is_finite()) {
                return fail(format!("α^ψ of cluster {k} is {}", c.alpha_psi));
            }
        }
        if !(self.alpha_theta > 0.0 && self.alpha_theta.is_finite()) {
            return fail(format!("α^θ is {}", self.alpha_theta));
        }
        Ok(())
    }

    fn remove_theta(&mut self, k: usize) -> ThetaCluster {
        let last = self.clusters.len() - 1;
        let removed = self.clusters.swap_remove(k);
        if k != last {
            self.k.iter_mut().filter(|x| **x == last).for_each(|x| *x = k);
        }
        removed
    }

    fn remove_psi(&mut self, k: usize, j: usize) -> PsiCluster {
        let last = self.clusters[k].psi.len() - 1;
        let removed = self.clusters[k].psi.swap_remove(j);
        if j != last {
            for (kk, jj) in self.k.iter().zip(self.j.iter_mut()) {
                if *kk == k && *jj == last {
                    *jj = j;
                }
            }
        }
        removed
    }
}

/// What an observation can join in one urn step.
#[derive(Clone, Copy)]
enum Choice {
    Existing { k: usize, j: usize },
    AuxPsi { k: usize, r: usize },
    AuxTheta { q: usize },
}

/// Draws for `α^ψ` of a newly opened θ-cluster.
#[derive(Clone, Copy, Debug, PartialEq)]
enum AlphaPsiSource {
    Prior,
    Fixed(f64),
}

/// Sampler state plus the settings that stay fixed during a run.
pub struct UrnSampler {
    base: BaseMeasure,
    state: UrnState,
    m_aux: usize,
    fixed: bool,
}

impl UrnSampler {
    pub fn new<R: Rng + ?Sized>(data: &Dataset, hp: &Hyperparameters, m_aux: usize, rng: &mut R) -> Result<Self> {
        if m_aux == 0 {
            return Err(EdpmError::config("m_aux", "must be at least 1"));
        }
        let base = hp.prepare(data.p())?;
        let state = UrnState::single_cluster(&base, data.n(), rng)?;
        state.check()?;
        Ok(UrnSampler {
            base,
            state,
            m_aux,
            fixed: false,
        })
    }

    pub fn from_parts(base: BaseMeasure, state: UrnState, m_aux: usize) -> Self {
        UrnSampler {
            base,
            state,
            m_aux,
            fixed: false,
        }
    }

    /// Holds `α^θ` and every `α^ψ` at the given values; new clusters take
    /// `alpha_psi` and sweeps skip the concentration update.
    pub fn fix_concentrations(&mut self, alpha_theta: f64, alpha_psi: f64) {
        self.fixed = true;
        self.state.alpha_theta = alpha_theta;
        self.state.clusters.iter_mut().for_each(|c| c.alpha_psi = alpha_psi);
    }

    pub fn state(&self) -> &UrnState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut UrnState {
        &mut self.state
    }

    pub fn base(&self) -> &BaseMeasure {
        &self.base
    }

    fn alpha_source(&self) -> AlphaPsiSource {
        if self.fixed || self.base.hp.alpha_psi_shared {
            // every cluster carries the common value
            match self.state.clusters.first() {
                Some(c) => AlphaPsiSource::Fixed(c.alpha_psi),
                None => AlphaPsiSource::Prior,
            }
        } else {
            AlphaPsiSource::Prior
        }
    }

    pub fn sweep<R: Rng + ?Sized>(&mut self, data: &Dataset, rng: &mut R) -> Result<()> {
        pu_update_assignments(self, data, rng)?;
        pu_update_cluster_params(&mut self.state, data, &self.base, rng)?;
        if !self.fixed {
            pu_update_concentrations(&mut self.state, &self.base, rng)?;
        }
        Ok(())
    }
}

/// One pass of label updates over all observations.
pub fn pu_update_assignments<R: Rng + ?Sized>(s: &mut UrnSampler, data: &Dataset, rng: &mut R) -> Result<()> {
    let m = s.m_aux;
    let mf = m as f64;
    let prior_alpha = gamma_rate(s.base.hp.eta_x1, s.base.hp.eta_x2)?;
    let mut logw: Vec<f64> = Vec::new();
    let mut choices: Vec<Choice> = Vec::new();
    for i in 0..data.n() {
        let (x, y) = (data.row(i), data.y()[i]);
        let source = s.alpha_source();
        let (k0, j0) = (s.state.k[i], s.state.j[i]);
        s.state.clusters[k0].size -= 1;
        s.state.clusters[k0].psi[j0].size -= 1;

        // auxiliary θ-clusters: (θ, ψ, α^ψ)
        let mut aux_theta: Vec<(ThetaAtom, PsiAtom, f64)> = Vec::with_capacity(m);
        // auxiliary ψ for an existing θ-cluster that lost its singleton ψ
        let mut reused_psi: Option<(usize, PsiAtom)> = None;
        if s.state.clusters[k0].size == 0 {
            let c = s.state.remove_theta(k0);
            let psi = c.psi.into_iter().next().expect("one ψ-cluster").atom;
            aux_theta.push((c.atom, psi, c.alpha_psi));
        } else if s.state.clusters[k0].psi[j0].size == 0 {
            let p = s.state.remove_psi(k0, j0);
            reused_psi = Some((k0, p.atom));
        }
        while aux_theta.len() < m {
            let a = match source {
                AlphaPsiSource::Fixed(v) => v,
                AlphaPsiSource::Prior => prior_alpha.sample(rng),
            };
            aux_theta.push((s.base.draw_theta(rng), s.base.draw_psi(rng), a));
        }

        logw.clear();
        choices.clear();
        let mut aux_psi: Vec<Vec<PsiAtom>> = Vec::with_capacity(s.state.clusters.len());
        for (k, c) in s.state.clusters.iter().enumerate() {
            let nk = c.size as f64;
            let ly = c.atom.log_density(x, y) + nk.ln() - (nk + c.alpha_psi).ln();
            for (j, p) in c.psi.iter().enumerate() {
                logw.push(ly + (p.size as f64).ln() + p.atom.log_density(x));
                choices.push(Choice::Existing { k, j });
            }
            let mut aux = Vec::with_capacity(m);
            if let Some((kr, atom)) = reused_psi.as_ref() {
                if *kr == k {
                    aux.push(atom.clone());
                }
            }
            while aux.len() < m {
                aux.push(s.base.draw_psi(rng));
            }
            let la = ly + (c.alpha_psi / mf).ln();
            for (r, a) in aux.iter().enumerate() {
                logw.push(la + a.log_density(x));
                choices.push(Choice::AuxPsi { k, r });
            }
            aux_psi.push(aux);
        }
        let lt = (s.state.alpha_theta / mf).ln();
        for (q, (th, ps, _)) in aux_theta.iter().enumerate() {
            logw.push(lt + th.log_density(x, y) + ps.log_density(x));
            choices.push(Choice::AuxTheta { q });
        }

        let pick = sample_log_categorical(&mut logw, rng)
            .map_err(|e| EdpmError::numerical(format!("observation {i}: {e}")))?;
        match choices[pick] {
            Choice::Existing { k, j } => {
                let c = &mut s.state.clusters[k];
                c.size += 1;
                c.psi[j].size += 1;
                s.state.k[i] = k;
                s.state.j[i] = j;
            }
            Choice::AuxPsi { k, r } => {
                let atom = aux_psi[k].swap_remove(r);
                let c = &mut s.state.clusters[k];
                c.size += 1;
                c.psi.push(PsiCluster { atom, size: 1 });
                s.state.k[i] = k;
                s.state.j[i] = c.psi.len() - 1;
            }
            Choice::AuxTheta { q } => {
                let (theta, psi, alpha_psi) = aux_theta.swap_remove(q);
                s.state.clusters.push(ThetaCluster {
                    atom: theta,
                    alpha_psi,
                    psi: vec![PsiCluster { atom: psi, size: 1 }],
                    size: 1,
                });
                s.state.k[i] = s.state.clusters.len() - 1;
                s.state.j[i] = 0;
            }
        }
    }
    Ok(())
}

/// Conjugate atom updates for every occupied cluster, the same conditionals
/// as the blocked sampler.
pub fn pu_update_cluster_params<R: Rng + ?Sized>(
    s: &mut UrnState,
    data: &Dataset,
    base: &BaseMeasure,
    rng: &mut R,
) -> Result<()> {
    let mut members: Vec<Vec<Vec<usize>>> = s.clusters.iter().map(|c| vec![Vec::new(); c.psi.len()]).collect();
    for (i, (&k, &j)) in s.k.iter().zip(&s.j).enumerate() {
        members[k][j].push(i);
    }
    for (c, cells) in s.clusters.iter_mut().zip(&members) {
        let all: Vec<usize> = cells.iter().flatten().copied().collect();
        let (beta, tau) = draw_regression_atom(data, &all, c.atom.tau_y, base, rng)?;
        c.atom = ThetaAtom { beta, tau_y: tau };
        for (p, idx) in c.psi.iter_mut().zip(cells) {
            for l in 0..data.p() {
                let xs = idx.iter().map(|&i| data.row(i)[l]);
                let (mu, t) = draw_covariate_param(xs, p.atom.tau_x[l], l, base, rng)?;
                p.atom.mu[l] = mu;
                p.atom.tau_x[l] = t;
            }
        }
    }
    Ok(())
}

/// One auxiliary-variable update of a DP concentration with a
/// `Gamma(shape, rate)` prior, given `(clusters, observations)` for each
/// group sharing it. Groups with no observations carry no information.
pub fn update_dp_concentration<R: Rng + ?Sized>(
    alpha: f64,
    groups: &[(usize, usize)],
    shape: f64,
    rate: f64,
    rng: &mut R,
) -> Result<f64> {
    let (mut a, mut b) = (shape, rate);
    for &(clusters, n) in groups {
        if n == 0 {
            continue;
        }
        let nf = n as f64;
        let w = beta_dist(alpha + 1.0, nf)?.sample(rng);
        let s = rng.random::<f64>() < nf / (nf + alpha);
        a += clusters as f64 - if s { 1.0 } else { 0.0 };
        b -= w.max(f64::MIN_POSITIVE).ln();
    }
    Ok(Gamma::new(a, 1.0 / b)
        .map_err(|e| EdpmError::numerical(format!("Gamma({a}, rate {b}): {e}")))?
        .sample(rng))
}

pub fn pu_update_concentrations<R: Rng + ?Sized>(s: &mut UrnState, base: &BaseMeasure, rng: &mut R) -> Result<()> {
    let hp = &base.hp;
    let n = s.k.len();
    s.alpha_theta = update_dp_concentration(s.alpha_theta, &[(s.clusters.len(), n)], hp.eta_y1, hp.eta_y2, rng)?;
    if hp.alpha_psi_shared {
        let Some(first) = s.clusters.first() else {
            return Ok(());
        };
        let groups: Vec<(usize, usize)> = s.clusters.iter().map(|c| (c.psi.len(), c.size)).collect();
        let a = update_dp_concentration(first.alpha_psi, &groups, hp.eta_x1, hp.eta_x2, rng)?;
        s.clusters.iter_mut().for_each(|c| c.alpha_psi = a);
    } else {
        for c in s.clusters.iter_mut() {
            c.alpha_psi = update_dp_concentration(c.alpha_psi, &[(c.psi.len(), c.size)], hp.eta_x1, hp.eta_x2, rng)?;
        }
    }
    Ok(())
}

/// The predictive mixing measure of a state: occupied clusters weighted
/// `n_k / (n + α^θ)` plus one new θ-component weighted `α^θ / (n + α^θ)`,
/// and inside each the occupied ψ-clusters plus a new ψ-component weighted
/// `α^ψ_k / (n_k + α^ψ_k)`. New components carry base-measure atoms drawn
/// from `rng`. `alpha_psi` lists the occupied clusters only.
pub fn urn_draw<R: Rng + ?Sized>(iter: usize, s: &UrnState, base: &BaseMeasure, rng: &mut R) -> ChainDraw {
    let n = s.k.len() as f64;
    let denom = n + s.alpha_theta;
    let mut theta_weights: Vec<f64> = s.clusters.iter().map(|c| c.size as f64 / denom).collect();
    theta_weights.push(s.alpha_theta / denom);
    let mut theta_atoms: Vec<ThetaAtom> = s.clusters.iter().map(|c| c.atom.clone()).collect();
    theta_atoms.push(base.draw_theta(rng));
    let mut psi_weights = Vec::with_capacity(s.clusters.len() + 1);
    let mut psi_atoms = Vec::with_capacity(s.clusters.len() + 1);
    for c in &s.clusters {
        let d = c.size as f64 + c.alpha_psi;
        let mut w: Vec<f64> = c.psi.iter().map(|p| p.size as f64 / d).collect();
        w.push(c.alpha_psi / d);
        let mut a: Vec<PsiAtom> = c.psi.iter().map(|p| p.atom.clone()).collect();
        a.push(base.draw_psi(rng));
        psi_weights.push(w);
        psi_atoms.push(a);
    }
    psi_weights.push(vec![1.0]);
    psi_atoms.push(vec![base.draw_psi(rng)]);
    ChainDraw {
        iter,
        representation: Representation::Urn,
        theta_weights,
        psi_weights,
        theta_atoms,
        psi_atoms,
        k: s.k.clone(),
        j: s.j.clone(),
        alpha_theta: s.alpha_theta,
        alpha_psi: s.clusters.iter().map(|c| c.alpha_psi).collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UrnConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub stream: u64,
    pub m_aux: usize,
}

impl Default for UrnConfig {
    fn default() -> Self {
        UrnConfig {
            iterations: 50_000,
            burn_in: 10_000,
            thin: 1,
            seed: 0,
            stream: 0,
            m_aux: 3,
        }
    }
}

impl UrnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(EdpmError::config("iterations", "must be positive"));
        }
        if self.burn_in >= self.iterations {
            return Err(EdpmError::config("burn_in", "must be smaller than iterations"));
        }
        if self.thin == 0 {
            return Err(EdpmError::config("thin", "must be positive"));
        }
        if self.m_aux == 0 {
            return Err(EdpmError::config("m_aux", "must be at least 1"));
        }
        Ok(())
    }

    pub fn keeps(&self, iter: usize) -> bool {
        iter >= self.burn_in && (iter - self.burn_in) % self.thin == 0
    }
}

pub fn run_pu_chain_with<F>(data: &Dataset, hp: &Hyperparameters, cfg: &UrnConfig, mut sink: F) -> Result<usize>
where
    F: FnMut(&ChainDraw) -> Result<()>,
{
    cfg.validate()?;
    let mut rng: ChainRng = stream(cfg.seed, cfg.stream);
    let mut s = UrnSampler::new(data, hp, cfg.m_aux, &mut rng)?;
    let mut draws = 0;
    for it in 0..cfg.iterations {
        s.sweep(data, &mut rng)?;
        s.state
            .check()
            .map_err(|e| EdpmError::numerical(format!("sweep {it}: {e}")))?;
        if cfg.keeps(it) {
            sink(&urn_draw(it, &s.state, &s.base, &mut rng))?;
            draws += 1;
        }
    }
    Ok(draws)
}

pub fn run_pu_chain(data: &Dataset, hp: &Hyperparameters, cfg: &UrnConfig) -> Result<Chain> {
    let mut draws = Vec::new();
    run_pu_chain_with(data, hp, cfg, |d| {
        draws.push(d.clone());
        Ok(())
    })?;
    Ok(Chain { draws })
}

#[cfg(test)]
mod tests;
