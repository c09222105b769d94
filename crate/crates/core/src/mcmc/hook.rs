use crate::chain::ParamsRecord;
use crate::error::Result;
use crate::graph::{NodeId, OrderedDag};
use crate::hyperparams::Hyperparams;
use crate::rng::RngStream;

/// A single structural proposal, described relative to the state before it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StructureChange {
    AddEdge { parent: NodeId, child: NodeId },
    RemoveEdge { parent: NodeId, child: NodeId },
    /// New hidden `node` whose only child is `child`.
    Birth { node: NodeId, child: NodeId },
    /// Removal of the hidden orphan `node` whose only child is `child`.
    Death { node: NodeId, child: NodeId },
    Reorder { node: NodeId, theta: f64 },
}

/// Data likelihood plugged into the structure sampler.
///
/// Each proposal is announced with `propose`, which returns the log-likelihood
/// ratio of `after` against `before`, and is then settled with exactly one of
/// `accept` or `reject`. Hooks with auxiliary variables may draw them in
/// `propose` from a distribution that cancels against their prior.
pub trait LikelihoodHook: Send {
    fn log_likelihood(&self, dag: &OrderedDag) -> Result<f64>;

    fn propose(
        &mut self,
        before: &OrderedDag,
        after: &OrderedDag,
        _change: &StructureChange,
        _rng: &mut RngStream,
    ) -> Result<f64> {
        Ok(self.log_likelihood(after)? - self.log_likelihood(before)?)
    }

    fn accept(
        &mut self,
        _after: &OrderedDag,
        _change: &StructureChange,
        _rng: &mut RngStream,
    ) -> Result<()> {
        Ok(())
    }

    fn reject(&mut self, _change: &StructureChange) {}

    /// Updates parameters and latent variables for a fixed structure.
    fn update_auxiliary(
        &mut self,
        _dag: &OrderedDag,
        _hp: &Hyperparams,
        _rng: &mut RngStream,
    ) -> Result<()> {
        Ok(())
    }

    /// Burn-in flag for hooks that tune proposal scales.
    fn set_adapting(&mut self, _adapting: bool) {}

    fn params_record(&self) -> Option<ParamsRecord> {
        None
    }

    /// True when the hook contributes nothing, letting moves skip it.
    fn is_flat(&self) -> bool {
        false
    }
}

/// The prior alone.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoLikelihood;

impl LikelihoodHook for NoLikelihood {
    fn log_likelihood(&self, _dag: &OrderedDag) -> Result<f64> {
        Ok(0.0)
    }

    fn propose(
        &mut self,
        _before: &OrderedDag,
        _after: &OrderedDag,
        _change: &StructureChange,
        _rng: &mut RngStream,
    ) -> Result<f64> {
        Ok(0.0)
    }

    fn is_flat(&self) -> bool {
        true
    }
}
