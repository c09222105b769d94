//! Reversible-jump MCMC over active structures and order values.

mod hook;
mod hypers;
mod moves;

pub use hook::{LikelihoodHook, NoLikelihood, StructureChange};
pub use hypers::{resample_hypers, Hyper, HyperPrior};
pub use moves::{
    birth_intervals, birth_move, birth_proposal, death_move, death_proposal,
    gibbs_candidates, gibbs_edge_probability, gibbs_edges, order_bounds, order_move,
    singleton_orphan_parents, Proposal,
};

use rand::Rng;
use serde::Serialize;

use crate::chain::{ChainSample, SampleSink};
use crate::distribution::log_prob_infinite;
use crate::error::{IcpError, Result};
use crate::graph::OrderedDag;
use crate::hyperparams::Hyperparams;
use crate::rng::RngStream;

/// What the chain targets besides the data likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetSpec {
    /// Starting hyperparameters; fixed unless `infer_hypers` is set.
    pub hp: Hyperparams,
    pub infer_hypers: bool,
    /// Keep observed order values where they are.
    pub pin_observed: bool,
    pub hyper_prior: HyperPrior,
    /// Random-walk scale on the log of each hyperparameter.
    pub hyper_step: f64,
}

impl TargetSpec {
    pub fn new(hp: Hyperparams) -> Self {
        TargetSpec {
            hp,
            infer_hypers: false,
            pin_observed: true,
            hyper_prior: HyperPrior::default(),
            hyper_step: 0.5,
        }
    }
}

/// Current structure, hyperparameters and cached prior log-density.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub dag: OrderedDag,
    pub hp: Hyperparams,
    log_prior: f64,
}

impl ChainState {
    /// Fails when `dag` has inactive nodes or zero prior density.
    pub fn new(dag: OrderedDag, hp: Hyperparams) -> Result<Self> {
        dag.validate()?;
        if !dag.is_fully_active() {
            return Err(IcpError::InvalidGraph(
                "chain states must not contain inactive nodes".into(),
            ));
        }
        if dag.observed().next().is_none() {
            return Err(IcpError::InvalidGraph("no observed node".into()));
        }
        let log_prior = log_prob_infinite(&dag, &hp)?.value();
        if !log_prior.is_finite() {
            return Err(IcpError::ZeroProbability);
        }
        Ok(ChainState { dag, hp, log_prior })
    }

    pub fn log_prior(&self) -> f64 {
        self.log_prior
    }

    fn debug_check(&self, _target: &TargetSpec) {
        #[cfg(debug_assertions)]
        {
            self.dag.validate().expect("structure invariants");
            assert!(self.dag.is_fully_active(), "inactive node in chain state");
            let fresh = log_prob_infinite(&self.dag, &self.hp).unwrap().value();
            assert!(
                (fresh - self.log_prior).abs() <= 1e-8 * fresh.abs().max(1.0),
                "cached log prior drifted: {} vs {fresh}",
                self.log_prior
            );
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MoveCounter {
    pub proposed: u64,
    pub accepted: u64,
}

impl MoveCounter {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Proposal and acceptance counts per move type. Gibbs edge updates count
/// each resampled edge as a proposal and each flip as an acceptance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MoveStats {
    pub gibbs: MoveCounter,
    pub birth: MoveCounter,
    pub death: MoveCounter,
    /// Death proposals that found no singleton-orphan parent.
    pub death_null: u64,
    pub order: MoveCounter,
    pub alpha: MoveCounter,
    pub gamma: MoveCounter,
    pub phi: MoveCounter,
}

/// Number of each move per sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepSize {
    /// As many of each move as there are active nodes at the start of the sweep.
    PerActiveNode,
    Fixed {
        gibbs: usize,
        birth_death: usize,
        order: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub sweep: SweepSize,
    pub hyper_updates: usize,
    /// Sweeps discarded before the first emitted draw.
    pub burn_in: u64,
    /// Emit every `thin`-th sweep after burn-in.
    pub thin: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            sweep: SweepSize::PerActiveNode,
            hyper_updates: 1,
            burn_in: 0,
            thin: 1,
        }
    }
}

/// One sweep of every move type.
pub fn sweep(
    state: &mut ChainState,
    target: &TargetSpec,
    schedule: &Schedule,
    hook: &mut dyn LikelihoodHook,
    rng: &mut RngStream,
    stats: &mut MoveStats,
) -> Result<()> {
    let (gibbs, birth_death, order) = match schedule.sweep {
        SweepSize::PerActiveNode => {
            let k = state.dag.len();
            (k, k, k)
        }
        SweepSize::Fixed {
            gibbs,
            birth_death,
            order,
        } => (gibbs, birth_death, order),
    };
    for _ in 0..gibbs {
        gibbs_edges(state, target, hook, rng, stats)?;
    }
    for _ in 0..birth_death {
        if rng.random_bool(0.5) {
            birth_move(state, target, hook, rng, stats)?;
        } else {
            death_move(state, target, hook, rng, stats)?;
        }
    }
    for _ in 0..order {
        order_move(state, target, hook, rng, stats)?;
    }
    if target.infer_hypers {
        for _ in 0..schedule.hyper_updates {
            resample_hypers(state, target, rng, stats)?;
        }
    }
    hook.update_auxiliary(&state.dag, &state.hp, rng)?;
    Ok(())
}

fn emit(
    sink: &mut dyn SampleSink,
    iter: u64,
    state: &ChainState,
    hook: &dyn LikelihoodHook,
) -> Result<()> {
    let ll = if hook.is_flat() {
        0.0
    } else {
        hook.log_likelihood(&state.dag)?
    };
    sink.write(&ChainSample {
        iter,
        logp: state.log_prior + ll,
        graph: state.dag.to_record(),
        hypers: state.hp,
        params: hook.params_record(),
    })
}

/// Runs `iterations` sweeps from `init`, emitting the initial state (when
/// there is no burn-in) and every `thin`-th sweep after burn-in.
pub fn run_chain(
    target: &TargetSpec,
    init: OrderedDag,
    schedule: &Schedule,
    iterations: u64,
    rng: &mut RngStream,
    sink: &mut dyn SampleSink,
    hook: &mut dyn LikelihoodHook,
) -> Result<MoveStats> {
    if schedule.thin == 0 {
        return Err(IcpError::InvalidArgument("thinning interval must be positive".into()));
    }
    let mut state = ChainState::new(init, target.hp)?;
    let mut stats = MoveStats::default();
    hook.set_adapting(schedule.burn_in > 0);
    if schedule.burn_in == 0 {
        emit(sink, 0, &state, hook)?;
    }
    for iter in 1..=iterations {
        sweep(&mut state, target, schedule, hook, rng, &mut stats)?;
        if iter == schedule.burn_in {
            hook.set_adapting(false);
        }
        if iter > schedule.burn_in && (iter - schedule.burn_in).is_multiple_of(schedule.thin) {
            emit(sink, iter, &state, hook)?;
        }
        if iter % 1000 == 0 {
            log::debug!("sweep {iter}: K+ = {}, log prior = {:.3}", state.dag.len(), state.log_prior);
        }
    }
    Ok(stats)
}
