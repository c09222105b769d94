//! Structure moves: Gibbs edge updates, birth and death of singleton-orphan
//! parents, and order-value moves.

use rand::Rng;

use super::hook::{LikelihoodHook, StructureChange};
use super::{ChainState, MoveStats, TargetSpec};
use crate::distribution::log_prob_infinite;
use crate::error::{IcpError, Result};
use crate::graph::{count_stats, NodeId, NodeKind, OrderedDag};
use crate::hyperparams::Hyperparams;
use crate::rng::RngStream;

/// Log prior of `dag`, or `None` when active order values tie.
pub(crate) fn try_log_prior(dag: &OrderedDag, hp: &Hyperparams) -> Result<Option<f64>> {
    match log_prob_infinite(dag, hp) {
        Ok(v) => Ok(Some(v.value())),
        Err(IcpError::Tie(..)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn accept_log<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if log_ratio.is_nan() || log_ratio == f64::NEG_INFINITY {
        return false;
    }
    rng.random::<f64>().ln() < log_ratio
}

fn uniform_open<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> Option<f64> {
    if !(hi > lo) {
        return None;
    }
    for _ in 0..64 {
        let t = rng.random_range(lo..hi);
        if t > lo {
            return Some(t);
        }
    }
    None
}

/// Prior probability that `parent` links to the node under update, given
/// the parent's other out-degree `m_rest` and its ↓ count.
pub fn gibbs_edge_probability(kind: NodeKind, m_rest: usize, down: usize, hp: &Hyperparams) -> f64 {
    let boost = match kind {
        NodeKind::Observed => hp.phi,
        NodeKind::Hidden => 0.0,
    };
    (m_rest as f64 + boost) / (hp.alpha + down as f64 - 1.0 + boost)
}

/// Candidate parents of `child` for Gibbs edge updates: every higher node,
/// minus hidden nodes whose only child is `child`.
pub fn gibbs_candidates(dag: &OrderedDag, child: NodeId) -> Vec<NodeId> {
    let theta = match dag.node(child) {
        Some(n) => n.theta,
        None => return Vec::new(),
    };
    dag.nodes()
        .filter(|k| k.theta > theta)
        .filter(|k| {
            let rest = dag.children(k.id).iter().filter(|c| **c != child).count();
            k.is_observed() || rest > 0
        })
        .map(|k| k.id)
        .collect()
}

/// Resamples every candidate edge into one uniformly chosen node.
pub fn gibbs_edges(
    state: &mut ChainState,
    target: &TargetSpec,
    hook: &mut dyn LikelihoodHook,
    rng: &mut RngStream,
    stats: &mut MoveStats,
) -> Result<()> {
    let ids: Vec<NodeId> = state.dag.nodes().map(|n| n.id).collect();
    if ids.is_empty() {
        return Ok(());
    }
    let child = ids[rng.random_range(0..ids.len())];
    let counts = count_stats(&state.dag)?;
    let hp = state.hp;
    let mut changed = false;
    for parent in gibbs_candidates(&state.dag, child) {
        let node = *counts.get(parent).ok_or(IcpError::UnknownNode(parent))?;
        let present = state.dag.has_edge(parent, child);
        let m_rest = state.dag.children(parent).len() - usize::from(present);
        let p1 = gibbs_edge_probability(node.kind, m_rest, node.down, &hp);
        stats.gibbs.proposed += 1;
        let want = if hook.is_flat() {
            rng.random_bool(p1.clamp(0.0, 1.0))
        } else {
            let change = if present {
                StructureChange::RemoveEdge { parent, child }
            } else {
                StructureChange::AddEdge { parent, child }
            };
            let mut flipped = state.dag.clone();
            if present {
                flipped.remove_edge(parent, child)?;
            } else {
                flipped.add_edge(parent, child)?;
            }
            let delta = hook.propose(&state.dag, &flipped, &change, rng)?;
            // log L(edge) − log L(no edge)
            let ll_diff = if present { -delta } else { delta };
            let logit = p1.ln() - (-p1).ln_1p() + ll_diff;
            let p = if logit.is_nan() {
                0.0
            } else {
                1.0 / (1.0 + (-logit).exp())
            };
            let want = rng.random_bool(p.clamp(0.0, 1.0));
            if want != present {
                hook.accept(&flipped, &change, rng)?;
            } else {
                hook.reject(&change);
            }
            want
        };
        if want != present {
            if want {
                state.dag.add_edge(parent, child)?;
            } else {
                state.dag.remove_edge(parent, child)?;
            }
            stats.gibbs.accepted += 1;
            changed = true;
        }
    }
    if changed {
        state.log_prior = log_prob_infinite(&state.dag, &hp)?.value();
        state.debug_check(target);
    }
    Ok(())
}

/// Insertion gaps for a new parent of `child`: from θ_child through every
/// higher order value up to 1, so there are ↑+1 of them.
pub fn birth_intervals(dag: &OrderedDag, child: NodeId) -> Result<Vec<(f64, f64)>> {
    let theta = dag.node(child).ok_or(IcpError::UnknownNode(child))?.theta;
    let mut above: Vec<f64> = dag.nodes().map(|n| n.theta).filter(|t| *t > theta).collect();
    above.sort_by(f64::total_cmp);
    let mut bounds = Vec::with_capacity(above.len() + 2);
    bounds.push(theta);
    bounds.extend(above);
    bounds.push(1.0);
    Ok(bounds.windows(2).map(|w| (w[0], w[1])).collect())
}

/// Hidden parents of `child` that have no parents and no other child.
pub fn singleton_orphan_parents(dag: &OrderedDag, child: NodeId) -> Vec<NodeId> {
    dag.parents(child)
        .iter()
        .copied()
        .filter(|k| {
            let n = dag.node(*k).expect("parent exists");
            !n.is_observed() && dag.parents(*k).is_empty() && dag.children(*k).len() == 1
        })
        .collect()
}

/// Result of a birth or death proposal before the accept/reject decision.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub dag: OrderedDag,
    pub log_prior: f64,
    /// Log acceptance ratio without the likelihood and without the min with 1.
    pub log_ratio: f64,
    pub change: StructureChange,
}

/// Proposes a new hidden parent of `child` at `theta`.
///
/// Returns `None` when `theta` is not strictly inside a gap or collides with
/// an existing order value.
pub fn birth_proposal(
    dag: &OrderedDag,
    log_prior: f64,
    hp: &Hyperparams,
    child: NodeId,
    theta: f64,
) -> Result<Option<Proposal>> {
    let intervals = birth_intervals(dag, child)?;
    let Some(&(lo, hi)) = intervals.iter().find(|(lo, hi)| *lo < theta && theta < *hi) else {
        return Ok(None);
    };
    let k_plus = dag.len();
    let orphans = singleton_orphan_parents(dag, child).len();
    let mut next = dag.clone();
    let node = next.add_node(theta, NodeKind::Hidden)?;
    next.add_edge(node, child)?;
    let Some(lp_next) = try_log_prior(&next, hp)? else {
        return Ok(None);
    };
    let log_ratio = lp_next - log_prior
        + (hi - lo).ln()
        + (intervals.len() as f64).ln()
        + (k_plus as f64).ln()
        - ((orphans + 1) as f64).ln();
    Ok(Some(Proposal {
        dag: next,
        log_prior: lp_next,
        log_ratio,
        change: StructureChange::Birth { node, child },
    }))
}

/// Proposes removing the singleton-orphan parent `node` of `child`.
pub fn death_proposal(
    dag: &OrderedDag,
    log_prior: f64,
    hp: &Hyperparams,
    child: NodeId,
    node: NodeId,
) -> Result<Proposal> {
    let orphans = singleton_orphan_parents(dag, child);
    if !orphans.contains(&node) {
        return Err(IcpError::InvalidArgument(format!(
            "{node} is not a singleton-orphan parent of {child}"
        )));
    }
    let k_plus = dag.len();
    let theta_child = dag.node(child).ok_or(IcpError::UnknownNode(child))?.theta;
    let theta_node = dag.node(node).ok_or(IcpError::UnknownNode(node))?.theta;
    let up = dag.nodes().filter(|n| n.theta > theta_child).count();
    let mut next = dag.clone();
    next.remove_node(node)?;
    let intervals = birth_intervals(&next, child)?;
    let (lo, hi) = intervals
        .iter()
        .copied()
        .find(|(lo, hi)| *lo < theta_node && theta_node < *hi)
        .ok_or_else(|| IcpError::Internal("removed node does not sit inside a gap".into()))?;
    let lp_next = log_prob_infinite(&next, hp)?.value();
    let log_ratio = lp_next - log_prior + (orphans.len() as f64).ln()
        - (hi - lo).ln()
        - ((k_plus - 1) as f64).ln()
        - (up as f64).ln();
    Ok(Proposal {
        dag: next,
        log_prior: lp_next,
        log_ratio,
        change: StructureChange::Death { node, child },
    })
}

fn settle(
    state: &mut ChainState,
    proposal: Proposal,
    hook: &mut dyn LikelihoodHook,
    rng: &mut RngStream,
) -> Result<bool> {
    let delta = hook.propose(&state.dag, &proposal.dag, &proposal.change, rng)?;
    if accept_log(proposal.log_ratio + delta, rng) {
        hook.accept(&proposal.dag, &proposal.change, rng)?;
        state.dag = proposal.dag;
        state.log_prior = proposal.log_prior;
        Ok(true)
    } else {
        hook.reject(&proposal.change);
        Ok(false)
    }
}

/// Proposes a new hidden parent for a uniformly chosen node.
pub fn birth_move(
    state: &mut ChainState,
    target: &TargetSpec,
    hook: &mut dyn LikelihoodHook,
    rng: &mut RngStream,
    stats: &mut MoveStats,
) -> Result<bool> {
    stats.birth.proposed += 1;
    let ids: Vec<NodeId> = state.dag.nodes().map(|n| n.id).collect();
    let child = ids[rng.random_range(0..ids.len())];
    let intervals = birth_intervals(&state.dag, child)?;
    let (lo, hi) = intervals[rng.random_range(0..intervals.len())];
    let Some(theta) = uniform_open(lo, hi, rng) else {
        return Ok(false);
    };
    let Some(proposal) = birth_proposal(&state.dag, state.log_prior, &state.hp, child, theta)? else {
        return Ok(false);
    };
    let accepted = settle(state, proposal, hook, rng)?;
    if accepted {
        stats.birth.accepted += 1;
        state.debug_check(target);
    }
    Ok(accepted)
}

/// Removes a uniformly chosen singleton-orphan parent of a uniformly chosen
/// node; a node without such parents makes this a null move.
pub fn death_move(
    state: &mut ChainState,
    target: &TargetSpec,
    hook: &mut dyn LikelihoodHook,
    rng: &mut RngStream,
    stats: &mut MoveStats,
) -> Result<bool> {
    stats.death.proposed += 1;
    let ids: Vec<NodeId> = state.dag.nodes().map(|n| n.id).collect();
    let child = ids[rng.random_range(0..ids.len())];
    let orphans = singleton_orphan_parents(&state.dag, child);
    if orphans.is_empty() {
        stats.death_null += 1;
        return Ok(false);
    }
    let node = orphans[rng.random_range(0..orphans.len())];
    let proposal = death_proposal(&state.dag, state.log_prior, &state.hp, child, node)?;
    let accepted = settle(state, proposal, hook, rng)?;
    if accepted {
        stats.death.accepted += 1;
        state.debug_check(target);
    }
    Ok(accepted)
}

/// Bounds (h, l) of the order values `node` may take: its highest child and
/// its lowest parent, defaulting to 0 and 1.
pub fn order_bounds(dag: &OrderedDag, node: NodeId) -> (f64, f64) {
    let theta_of = |id: &NodeId| dag.node(*id).expect("neighbour exists").theta;
    let low = dag
        .children(node)
        .iter()
        .map(theta_of)
        .fold(0.0, f64::max);
    let high = dag
        .parents(node)
        .iter()
        .map(theta_of)
        .fold(1.0, f64::min);
    (low, high)
}

/// Redraws the order value of a uniformly chosen movable node inside the
/// range left free by its parents and children.
pub fn order_move(
    state: &mut ChainState,
    target: &TargetSpec,
    hook: &mut dyn LikelihoodHook,
    rng: &mut RngStream,
    stats: &mut MoveStats,
) -> Result<bool> {
    let movable: Vec<NodeId> = state
        .dag
        .nodes()
        .filter(|n| !(target.pin_observed && n.is_observed()))
        .map(|n| n.id)
        .collect();
    if movable.is_empty() {
        return Ok(false);
    }
    stats.order.proposed += 1;
    let node = movable[rng.random_range(0..movable.len())];
    let (lo, hi) = order_bounds(&state.dag, node);
    let Some(theta) = uniform_open(lo, hi, rng) else {
        return Ok(false);
    };
    let mut next = state.dag.clone();
    next.set_theta(node, theta)?;
    let Some(lp_next) = try_log_prior(&next, &state.hp)? else {
        return Ok(false);
    };
    let proposal = Proposal {
        log_ratio: lp_next - state.log_prior,
        dag: next,
        log_prior: lp_next,
        change: StructureChange::Reorder { node, theta },
    };
    let accepted = settle(state, proposal, hook, rng)?;
    if accepted {
        stats.order.accepted += 1;
        state.debug_check(target);
    }
    Ok(accepted)
}
