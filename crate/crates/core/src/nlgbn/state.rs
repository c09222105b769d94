//! Explicit parameter/activation state and the full joint log-density.

use std::collections::BTreeMap;

use crate::distribution::log_prob_infinite;
use crate::error::{IcpError, Result};
use crate::graph::{NodeId, OrderedDag};
use crate::hyperparams::Hyperparams;
use crate::special::{log_gamma_density, log_normal_density, LN_GAMMA_HALF};

use super::unit::{log_density_preactivation, log_density_unit, sigmoid};

/// Shape and rate of the Gamma prior on unit precisions.
pub const PRECISION_SHAPE: f64 = 0.5;
pub const PRECISION_RATE: f64 = 0.5;

pub(crate) fn log_precision_prior(rho: f64) -> f64 {
    log_gamma_density(rho, PRECISION_SHAPE, PRECISION_RATE, LN_GAMMA_HALF)
}

/// Weights, biases, precisions and hidden preactivations of one network.
///
/// Observed nodes in ascending id order read data columns 0, 1, ...; their
/// outputs are the rescaled data. Hidden outputs are σ of the stored
/// preactivations.
#[derive(Debug, Clone, PartialEq)]
pub struct NlgbnState {
    pub weights: BTreeMap<(NodeId, NodeId), f64>,
    pub biases: BTreeMap<NodeId, f64>,
    pub precisions: BTreeMap<NodeId, f64>,
    pub preactivations: BTreeMap<NodeId, Vec<f64>>,
}

impl NlgbnState {
    /// Checks that the state covers exactly the nodes and edges of `dag`.
    pub fn check_consistent(&self, dag: &OrderedDag, n: usize) -> Result<()> {
        let edges: Vec<(NodeId, NodeId)> = dag.edges();
        if edges.len() != self.weights.len() || edges.iter().any(|e| !self.weights.contains_key(e)) {
            return Err(IcpError::InvalidArgument("weights do not match the edge set".into()));
        }
        for node in dag.nodes() {
            if !self.biases.contains_key(&node.id) {
                return Err(IcpError::InvalidArgument(format!("missing bias for {}", node.id)));
            }
            match self.precisions.get(&node.id) {
                Some(r) if *r > 0.0 => {}
                _ => {
                    return Err(IcpError::InvalidArgument(format!(
                        "missing or non-positive precision for {}",
                        node.id
                    )))
                }
            }
            let acts = self.preactivations.get(&node.id);
            match (node.is_observed(), acts) {
                (true, None) => {}
                (false, Some(a)) if a.len() == n => {}
                _ => {
                    return Err(IcpError::InvalidArgument(format!(
                        "preactivations of {} do not match its kind or the data size",
                        node.id
                    )))
                }
            }
        }
        if self.biases.len() != dag.len() || self.precisions.len() != dag.len() {
            return Err(IcpError::InvalidArgument("parameters for unknown nodes".into()));
        }
        Ok(())
    }

    /// Output values u of every node for every datum.
    pub fn outputs(&self, dag: &OrderedDag, data: &[Vec<f64>]) -> Result<BTreeMap<NodeId, Vec<f64>>> {
        let mut out = BTreeMap::new();
        let mut col = 0;
        for node in dag.nodes() {
            if node.is_observed() {
                let values = data.get(col).ok_or_else(|| {
                    IcpError::InvalidArgument("fewer data columns than observed nodes".into())
                })?;
                out.insert(node.id, values.clone());
                col += 1;
            } else {
                out.insert(node.id, self.preactivations[&node.id].iter().map(|a| sigmoid(*a)).collect());
            }
        }
        if col != data.len() {
            return Err(IcpError::InvalidArgument("more data columns than observed nodes".into()));
        }
        Ok(out)
    }
}

/// Data term plus parameter priors, without the structure prior.
pub fn log_likelihood_and_params(dag: &OrderedDag, state: &NlgbnState, data: &[Vec<f64>]) -> Result<f64> {
    let n = data.first().map(|c| c.len()).unwrap_or(0);
    state.check_consistent(dag, n)?;
    let outputs = state.outputs(dag, data)?;
    let mut total = 0.0;
    for node in dag.nodes() {
        let id = node.id;
        let (bias, rho) = (state.biases[&id], state.precisions[&id]);
        total += log_normal_density(bias, 0.0, 1.0) + log_precision_prior(rho);
        let parents = dag.parents(id);
        for p in parents {
            total += log_normal_density(state.weights[&(*p, id)], 0.0, 1.0);
        }
        for row in 0..n {
            let mean = bias
                + parents
                    .iter()
                    .map(|p| state.weights[&(*p, id)] * outputs[p][row])
                    .sum::<f64>();
            total += if node.is_observed() {
                log_density_unit(outputs[&id][row], mean, rho)?
            } else {
                log_density_preactivation(state.preactivations[&id][row], mean, rho)
            };
        }
    }
    Ok(total)
}

/// Structure prior plus data term plus parameter priors. `data` holds the
/// rescaled observations column by column.
pub fn log_joint(dag: &OrderedDag, state: &NlgbnState, data: &[Vec<f64>], hp: &Hyperparams) -> Result<f64> {
    Ok(log_prob_infinite(dag, hp)?.value() + log_likelihood_and_params(dag, state, data)?)
}
