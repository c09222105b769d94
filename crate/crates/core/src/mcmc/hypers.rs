//! Random-walk Metropolis updates of α, γ and φ on the log scale.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::moves::try_log_prior;
use super::{ChainState, MoveStats, TargetSpec};
use crate::error::Result;
use crate::hyperparams::Hyperparams;
use crate::rng::RngStream;
use crate::special::{ln_gamma, log_gamma_density};

/// Gamma(shape, rate) priors on γ, 1/α and φ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for HyperPrior {
    fn default() -> Self {
        HyperPrior {
            shape: 0.5,
            rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hyper {
    Alpha,
    Gamma,
    Phi,
}

impl HyperPrior {
    fn ln_gamma_shape(&self) -> f64 {
        ln_gamma(self.shape)
    }

    /// Log-density of `log(value)` for the named hyperparameter, including
    /// the Jacobian of the log transform.
    pub fn log_density_log_scale(&self, which: Hyper, value: f64) -> f64 {
        let lg = self.ln_gamma_shape();
        match which {
            // 1/α ~ Gamma: density of log α is g(1/α) / α
            Hyper::Alpha => log_gamma_density(1.0 / value, self.shape, self.rate, lg) - value.ln(),
            Hyper::Gamma | Hyper::Phi => {
                log_gamma_density(value, self.shape, self.rate, lg) + value.ln()
            }
        }
    }
}

fn with_value(hp: &Hyperparams, which: Hyper, value: f64) -> Hyperparams {
    let mut out = *hp;
    match which {
        Hyper::Alpha => out.alpha = value,
        Hyper::Gamma => out.gamma = value,
        Hyper::Phi => out.phi = value,
    }
    out
}

fn value_of(hp: &Hyperparams, which: Hyper) -> f64 {
    match which {
        Hyper::Alpha => hp.alpha,
        Hyper::Gamma => hp.gamma,
        Hyper::Phi => hp.phi,
    }
}

/// One Metropolis update of each hyperparameter in turn. φ stays put when it
/// is exactly 0, since that value is a modelling choice rather than a draw.
pub fn resample_hypers(
    state: &mut ChainState,
    target: &TargetSpec,
    rng: &mut RngStream,
    stats: &mut MoveStats,
) -> Result<()> {
    for which in [Hyper::Alpha, Hyper::Gamma, Hyper::Phi] {
        let current = value_of(&state.hp, which);
        if which == Hyper::Phi && current == 0.0 {
            continue;
        }
        let counter = match which {
            Hyper::Alpha => &mut stats.alpha,
            Hyper::Gamma => &mut stats.gamma,
            Hyper::Phi => &mut stats.phi,
        };
        counter.proposed += 1;
        let step: f64 = StandardNormal.sample(rng);
        let proposed = (current.ln() + target.hyper_step * step).exp();
        if !(proposed > 0.0 && proposed.is_finite()) {
            continue;
        }
        let hp_new = with_value(&state.hp, which, proposed);
        let Some(lp_new) = try_log_prior(&state.dag, &hp_new)? else {
            continue;
        };
        let log_ratio = lp_new - state.log_prior
            + target.hyper_prior.log_density_log_scale(which, proposed)
            - target.hyper_prior.log_density_log_scale(which, current);
        let accept = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
        if accept {
            state.hp = hp_new;
            state.log_prior = lp_new;
            counter.accepted += 1;
        }
    }
    Ok(())
}
