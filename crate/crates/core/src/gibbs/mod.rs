//! Blocked Gibbs sampler for the truncated model.
//!
//! A sweep updates, in order: regression atoms, covariate atoms, the joint
//! `(K, J)` labels, θ-sticks, ψ-sticks, `α^θ`, `α^ψ`.

mod updates;

pub use updates::{
    concentration_psi_shared_params, concentration_theta_params, update_assignments,
    update_concentration_psi, update_concentration_theta, update_covariate_atoms,
    update_psi_weights, update_regression_atoms, update_theta_weights, covariate_posterior,
    regression_posterior, AssignmentKernel,
};
pub(crate) use updates::{draw_covariate_param, draw_regression_atom};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{estimate_concentrations_from_trace, min_truncation};
use crate::chain::{Chain, ChainDraw};
use crate::error::{EdpmError, Result};
use crate::model::{BaseMeasure, Dataset, GibbsState, Hyperparameters, Truncation};
use crate::rng::{stream, ChainRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitPolicy {
    /// Atoms, sticks and concentrations from the prior, then one label pass.
    PriorDraw,
    /// Prior atoms and weights, every observation in cell `(0, 0)`.
    SingleCluster,
}

/// Short run used to pick `(N, M)` from estimated concentrations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub trunc: Truncation,
}

impl Default for PilotConfig {
    fn default() -> Self {
        PilotConfig {
            iterations: 10_000,
            burn_in: 2_000,
            trunc: Truncation::new(10, 50).expect("valid"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationSpec {
    Fixed(Truncation),
    Auto { eps: f64, pilot: PilotConfig },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Independent RNG stream index, for running several chains per seed.
    pub stream: u64,
    pub trunc: TruncationSpec,
    pub init: InitPolicy,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: 100_000,
            burn_in: 20_000,
            thin: 1,
            seed: 0,
            stream: 0,
            trunc: TruncationSpec::Fixed(Truncation::new(10, 50).expect("valid")),
            init: InitPolicy::PriorDraw,
        }
    }
}

impl ChainConfig {
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
        if let TruncationSpec::Auto { eps, pilot } = self.trunc {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(EdpmError::config("trunc.eps", "must lie in (0, 1)"));
            }
            if pilot.burn_in >= pilot.iterations {
                return Err(EdpmError::config("trunc.pilot_burn_in", "must be smaller than pilot iterations"));
            }
        }
        Ok(())
    }

    /// Whether sweep `iter` (0-based) is retained.
    pub fn keeps(&self, iter: usize) -> bool {
        iter >= self.burn_in && (iter - self.burn_in) % self.thin == 0
    }

    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

/// A sampler bound to a prepared base measure and its state.
pub struct BlockedGibbs {
    base: BaseMeasure,
    state: GibbsState,
}

impl BlockedGibbs {
    pub fn new<R: Rng + ?Sized>(
        data: &Dataset,
        hp: &Hyperparameters,
        trunc: Truncation,
        init: InitPolicy,
        rng: &mut R,
    ) -> Result<Self> {
        let base = hp.prepare(data.p())?;
        let mut state = GibbsState::from_prior(&base, trunc, data.n(), rng)?;
        if init == InitPolicy::PriorDraw {
            update_assignments(&mut state, data, rng)?;
        }
        Ok(BlockedGibbs { base, state })
    }

    pub fn from_parts(base: BaseMeasure, state: GibbsState) -> Self {
        BlockedGibbs { base, state }
    }

    pub fn state(&self) -> &GibbsState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut GibbsState {
        &mut self.state
    }

    pub fn base(&self) -> &BaseMeasure {
        &self.base
    }

    pub fn into_state(self) -> GibbsState {
        self.state
    }

    pub fn sweep<R: Rng + ?Sized>(&mut self, data: &Dataset, rng: &mut R) -> Result<()> {
        let (s, b) = (&mut self.state, &self.base);
        update_regression_atoms(s, data, b, rng)?;
        update_covariate_atoms(s, data, b, rng)?;
        update_assignments(s, data, rng)?;
        update_theta_weights(s, rng)?;
        update_psi_weights(s, rng)?;
        update_concentration_theta(s, b, rng)?;
        update_concentration_psi(s, b, rng)?;
        Ok(())
    }
}

/// Outcome of [`run_chain_with`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub trunc: Truncation,
    pub draws: usize,
    /// `(α^θ, α^ψ_max)` posterior means from the pilot, when one ran.
    pub pilot_concentrations: Option<(f64, f64)>,
}

/// Picks the truncation for `cfg`. In auto mode a pilot chain runs on its
/// own RNG stream and `min_truncation` is applied to its concentration
/// estimates.
pub fn resolve_truncation(
    data: &Dataset,
    hp: &Hyperparameters,
    cfg: &ChainConfig,
) -> Result<(Truncation, Option<(f64, f64)>)> {
    match cfg.trunc {
        TruncationSpec::Fixed(t) => Ok((t, None)),
        TruncationSpec::Auto { eps, pilot } => {
            let mut rng = stream(cfg.seed, cfg.stream.wrapping_add(1 << 32));
            let mut g = BlockedGibbs::new(data, hp, pilot.trunc, cfg.init, &mut rng)?;
            let mut at = Vec::with_capacity(pilot.iterations - pilot.burn_in);
            let mut ap = Vec::with_capacity(pilot.iterations - pilot.burn_in);
            for it in 0..pilot.iterations {
                g.sweep(data, &mut rng)?;
                if it >= pilot.burn_in {
                    at.push(g.state.alpha_theta);
                    ap.push(g.state.alpha_psi_max());
                }
            }
            let (a_t, a_p) = estimate_concentrations_from_trace(&at, &ap)?;
            let (n, m) = min_truncation(data.n(), a_t, a_p, eps)?;
            Ok((Truncation::new(n, m)?, Some((a_t, a_p))))
        }
    }
}

/// Runs one chain, handing every retained draw to `sink` as it is produced.
pub fn run_chain_with<F>(
    data: &Dataset,
    hp: &Hyperparameters,
    cfg: &ChainConfig,
    mut sink: F,
) -> Result<RunSummary>
where
    F: FnMut(&ChainDraw) -> Result<()>,
{
    cfg.validate()?;
    let (trunc, pilot) = resolve_truncation(data, hp, cfg)?;
    let mut rng: ChainRng = stream(cfg.seed, cfg.stream);
    let mut g = BlockedGibbs::new(data, hp, trunc, cfg.init, &mut rng)?;
    let mut draws = 0;
    for it in 0..cfg.iterations {
        g.sweep(data, &mut rng)?;
        g.state
            .check()
            .map_err(|e| EdpmError::numerical(format!("sweep {it}: {e}")))?;
        if cfg.keeps(it) {
            sink(&ChainDraw::from_state(it, &g.state))?;
            draws += 1;
        }
    }
    Ok(RunSummary {
        trunc,
        draws,
        pilot_concentrations: pilot,
    })
}

pub fn run_chain(data: &Dataset, hp: &Hyperparameters, cfg: &ChainConfig) -> Result<Chain> {
    let mut draws = Vec::with_capacity(cfg.retained());
    run_chain_with(data, hp, cfg, |d| {
        draws.push(d.clone());
        Ok(())
    })?;
    Ok(Chain { draws })
}
