//! Ordered DAGs, active sets and the counting statistics the density needs.
//!
//! Every node carries an order value `theta` in [0, 1]; an edge `parent -> child`
//! is only allowed when `theta(parent) > theta(child)`, which makes every
//! `OrderedDag` acyclic by construction. Node ids are stable handles and are
//! never reused within one graph's lifetime.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IcpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    #[serde(rename = "obs")]
    Observed,
    #[serde(rename = "hid")]
    Hidden,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub theta: f64,
    pub kind: NodeKind,
}

impl Node {
    pub fn is_observed(&self) -> bool {
        self.kind == NodeKind::Observed
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    node: Node,
    parents: Vec<NodeId>,
    children: Vec<NodeId>,
}

/// A DAG whose edge directions are fixed by per-node order values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrderedDag {
    // sorted by node id
    entries: Vec<Entry>,
    next_id: u64,
}

fn check_theta(theta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(IcpError::Domain(format!(
            "order value {theta} outside [0, 1]"
        )))
    }
}

fn insert_sorted(list: &mut Vec<NodeId>, id: NodeId) -> bool {
    match list.binary_search(&id) {
        Ok(_) => false,
        Err(pos) => {
            list.insert(pos, id);
            true
        }
    }
}

fn remove_sorted(list: &mut Vec<NodeId>, id: NodeId) -> bool {
    match list.binary_search(&id) {
        Ok(pos) => {
            list.remove(pos);
            true
        }
        Err(_) => false,
    }
}

impl OrderedDag {
    pub fn new() -> Self {
        Self::default()
    }

    fn index(&self, id: NodeId) -> Option<usize> {
        self.entries.binary_search_by_key(&id, |e| e.node.id).ok()
    }

    fn entry(&self, id: NodeId) -> Result<&Entry> {
        self.index(id)
            .map(|i| &self.entries[i])
            .ok_or(IcpError::UnknownNode(id))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The id the next `add_node` call will hand out.
    pub fn next_id(&self) -> NodeId {
        NodeId(self.next_id)
    }

    pub fn add_node(&mut self, theta: f64, kind: NodeKind) -> Result<NodeId> {
        check_theta(theta)?;
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.entries.push(Entry {
            node: Node { id, theta, kind },
            parents: Vec::new(),
            children: Vec::new(),
        });
        Ok(id)
    }

    /// Inserts a node with a caller-chosen id.
    pub fn insert_node(&mut self, node: Node) -> Result<()> {
        check_theta(node.theta)?;
        match self.entries.binary_search_by_key(&node.id, |e| e.node.id) {
            Ok(_) => Err(IcpError::InvalidGraph(format!(
                "duplicate node id {}",
                node.id
            ))),
            Err(pos) => {
                self.entries.insert(
                    pos,
                    Entry {
                        node,
                        parents: Vec::new(),
                        children: Vec::new(),
                    },
                );
                self.next_id = self.next_id.max(node.id.0 + 1);
                Ok(())
            }
        }
    }

    pub fn remove_node(&mut self, id: NodeId) -> Result<Node> {
        let idx = self.index(id).ok_or(IcpError::UnknownNode(id))?;
        let entry = self.entries.remove(idx);
        for p in &entry.parents {
            if let Some(pi) = self.index(*p) {
                remove_sorted(&mut self.entries[pi].children, id);
            }
        }
        for c in &entry.children {
            if let Some(ci) = self.index(*c) {
                remove_sorted(&mut self.entries[ci].parents, id);
            }
        }
        Ok(entry.node)
    }

    pub fn add_edge(&mut self, parent: NodeId, child: NodeId) -> Result<()> {
        let pi = self.index(parent).ok_or(IcpError::UnknownNode(parent))?;
        let ci = self.index(child).ok_or(IcpError::UnknownNode(child))?;
        if pi == ci {
            return Err(IcpError::InvalidEdge {
                parent,
                child,
                reason: "self edge",
            });
        }
        if !(self.entries[pi].node.theta > self.entries[ci].node.theta) {
            return Err(IcpError::InvalidEdge {
                parent,
                child,
                reason: "parent order value must exceed the child's",
            });
        }
        if !insert_sorted(&mut self.entries[pi].children, child) {
            return Err(IcpError::InvalidEdge {
                parent,
                child,
                reason: "duplicate edge",
            });
        }
        insert_sorted(&mut self.entries[ci].parents, parent);
        Ok(())
    }

    pub fn remove_edge(&mut self, parent: NodeId, child: NodeId) -> Result<()> {
        let pi = self.index(parent).ok_or(IcpError::UnknownNode(parent))?;
        let ci = self.index(child).ok_or(IcpError::UnknownNode(child))?;
        if !remove_sorted(&mut self.entries[pi].children, child) {
            return Err(IcpError::InvalidEdge {
                parent,
                child,
                reason: "no such edge",
            });
        }
        remove_sorted(&mut self.entries[ci].parents, parent);
        Ok(())
    }

    pub fn has_edge(&self, parent: NodeId, child: NodeId) -> bool {
        self.index(parent)
            .map(|i| self.entries[i].children.binary_search(&child).is_ok())
            .unwrap_or(false)
    }

    /// Moves a node's order value, keeping every incident edge valid.
    pub fn set_theta(&mut self, id: NodeId, theta: f64) -> Result<()> {
        check_theta(theta)?;
        let idx = self.index(id).ok_or(IcpError::UnknownNode(id))?;
        let entry = &self.entries[idx];
        for p in &entry.parents {
            if !(self.entry(*p)?.node.theta > theta) {
                return Err(IcpError::InvalidEdge {
                    parent: *p,
                    child: id,
                    reason: "new order value would reach a parent",
                });
            }
        }
        for c in &entry.children {
            if !(self.entry(*c)?.node.theta < theta) {
                return Err(IcpError::InvalidEdge {
                    parent: id,
                    child: *c,
                    reason: "new order value would reach a child",
                });
            }
        }
        self.entries[idx].node.theta = theta;
        Ok(())
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.index(id).map(|i| &self.entries[i].node)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index(id).is_some()
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> + '_ {
        self.entries.iter().map(|e| &e.node)
    }

    pub fn observed(&self) -> impl Iterator<Item = &Node> + '_ {
        self.nodes().filter(|n| n.is_observed())
    }

    /// Parents of `id`, sorted by id; empty for unknown nodes.
    pub fn parents(&self, id: NodeId) -> &[NodeId] {
        self.index(id)
            .map(|i| self.entries[i].parents.as_slice())
            .unwrap_or(&[])
    }

    /// Children of `id`, sorted by id; empty for unknown nodes.
    pub fn children(&self, id: NodeId) -> &[NodeId] {
        self.index(id)
            .map(|i| self.entries[i].children.as_slice())
            .unwrap_or(&[])
    }

    pub fn edge_count(&self) -> usize {
        self.entries.iter().map(|e| e.children.len()).sum()
    }

    /// All edges in lexicographic (parent, child) order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.entries
            .iter()
            .flat_map(|e| e.children.iter().map(move |c| (e.node.id, *c)))
            .collect()
    }

    /// Node ids sorted by descending order value (ties by id), which is a
    /// topological order: parents always come before their children.
    pub fn descending_order(&self) -> Vec<NodeId> {
        let mut ids: Vec<&Node> = self.nodes().collect();
        ids.sort_by(|a, b| b.theta.total_cmp(&a.theta).then(a.id.cmp(&b.id)));
        ids.into_iter().map(|n| n.id).collect()
    }

    fn active_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.entries.len()];
        let mut stack: Vec<usize> = Vec::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.node.is_observed() {
                mask[i] = true;
                stack.push(i);
            }
        }
        while let Some(i) = stack.pop() {
            for p in &self.entries[i].parents {
                if let Some(pi) = self.index(*p) {
                    if !mask[pi] {
                        mask[pi] = true;
                        stack.push(pi);
                    }
                }
            }
        }
        mask
    }

    /// Observed nodes together with all of their ancestors.
    pub fn active_set(&self) -> BTreeSet<NodeId> {
        self.active_mask()
            .iter()
            .zip(&self.entries)
            .filter(|(a, _)| **a)
            .map(|(_, e)| e.node.id)
            .collect()
    }

    /// Drops every node that has no directed path to an observed node.
    pub fn prune_inactive(&mut self) -> Vec<NodeId> {
        let mask = self.active_mask();
        let dead: Vec<NodeId> = mask
            .iter()
            .zip(&self.entries)
            .filter(|(a, _)| !**a)
            .map(|(_, e)| e.node.id)
            .collect();
        for id in &dead {
            let _ = self.remove_node(*id);
        }
        dead
    }

    /// Checks the structural invariants: order constraint on every edge,
    /// consistent adjacency lists and order values inside [0, 1].
    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            check_theta(e.node.theta)?;
            for c in &e.children {
                let child = self.entry(*c)?;
                if !(e.node.theta > child.node.theta) {
                    return Err(IcpError::InvalidEdge {
                        parent: e.node.id,
                        child: *c,
                        reason: "order constraint violated",
                    });
                }
                if child.parents.binary_search(&e.node.id).is_err() {
                    return Err(IcpError::InvalidGraph(format!(
                        "adjacency lists disagree on {} -> {}",
                        e.node.id, c
                    )));
                }
            }
            let parent_total: usize = e.parents.len();
            let listed = e
                .parents
                .iter()
                .filter(|p| self.children(**p).binary_search(&e.node.id).is_ok())
                .count();
            if listed != parent_total {
                return Err(IcpError::InvalidGraph(format!(
                    "adjacency lists disagree on parents of {}",
                    e.node.id
                )));
            }
        }
        Ok(())
    }

    /// Whether every node can reach an observed node.
    pub fn is_fully_active(&self) -> bool {
        self.active_mask().iter().all(|a| *a)
    }

    pub fn to_record(&self) -> GraphRecord {
        GraphRecord {
            nodes: self
                .nodes()
                .map(|n| NodeRecord {
                    id: n.id.0,
                    theta: n.theta,
                    kind: n.kind,
                })
                .collect(),
            edges: self.edges().into_iter().map(|(p, c)| [p.0, c.0]).collect(),
        }
    }

    pub fn from_record(record: &GraphRecord) -> Result<Self> {
        let mut dag = OrderedDag::new();
        for n in &record.nodes {
            dag.insert_node(Node {
                id: NodeId(n.id),
                theta: n.theta,
                kind: n.kind,
            })?;
        }
        for [p, c] in &record.edges {
            dag.add_edge(NodeId(*p), NodeId(*c))?;
        }
        Ok(dag)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("graph records always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: GraphRecord = serde_json::from_str(text)?;
        Self::from_record(&record)
    }
}

/// Serialized graph: `{"nodes":[{"id","theta","kind"}],"edges":[[parent,child],...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphRecord {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<[u64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub id: u64,
    pub theta: f64,
    pub kind: NodeKind,
}

pub fn active_set(dag: &OrderedDag) -> BTreeSet<NodeId> {
    dag.active_set()
}

/// Per-node statistics of one active node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveNode {
    pub id: NodeId,
    pub theta: f64,
    pub kind: NodeKind,
    /// Outgoing edges to active nodes.
    pub m: usize,
    /// Active nodes with a strictly lower order value.
    pub down: usize,
    /// Active nodes with a strictly higher order value.
    pub up: usize,
}

/// Counting statistics over the active subgraph.
#[derive(Debug, Clone, PartialEq)]
pub struct CountStats {
    /// Active nodes sorted by ascending order value (ties by id).
    pub nodes: Vec<ActiveNode>,
    pub k_plus: usize,
    pub d: usize,
}

impl CountStats {
    pub fn get(&self, id: NodeId) -> Option<&ActiveNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn position(&self, id: NodeId) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Active edge count E⁺.
    pub fn e_plus(&self) -> usize {
        self.nodes.iter().map(|n| n.m).sum()
    }

    pub fn hidden_count(&self) -> usize {
        self.k_plus - self.d
    }
}

/// Computes m, ↓ and ↑ for every active node.
///
/// Observed nodes may share an order value (e.g. all pinned at 0); a tie that
/// involves a hidden node is rejected because it would corrupt ↓ and ↑.
pub fn count_stats(dag: &OrderedDag) -> Result<CountStats> {
    let mask = dag.active_mask();
    let mut order: Vec<usize> = (0..dag.entries.len()).filter(|i| mask[*i]).collect();
    order.sort_by(|a, b| {
        let (na, nb) = (&dag.entries[*a].node, &dag.entries[*b].node);
        na.theta.total_cmp(&nb.theta).then(na.id.cmp(&nb.id))
    });
    let k_plus = order.len();
    let mut nodes = Vec::with_capacity(k_plus);
    let mut d = 0;
    let mut group_start = 0;
    while group_start < k_plus {
        let theta = dag.entries[order[group_start]].node.theta;
        let mut group_end = group_start + 1;
        while group_end < k_plus && dag.entries[order[group_end]].node.theta == theta {
            group_end += 1;
        }
        if group_end - group_start > 1 {
            let group = &order[group_start..group_end];
            if let Some(h) = group
                .iter()
                .find(|i| dag.entries[**i].node.kind == NodeKind::Hidden)
            {
                let other = group.iter().find(|i| *i != h).unwrap();
                return Err(IcpError::Tie(
                    dag.entries[*h].node.id,
                    dag.entries[*other].node.id,
                    theta,
                ));
            }
        }
        for &i in &order[group_start..group_end] {
            let e = &dag.entries[i];
            let m = e
                .children
                .iter()
                .filter(|c| dag.index(**c).map(|ci| mask[ci]).unwrap_or(false))
                .count();
            if e.node.is_observed() {
                d += 1;
            }
            nodes.push(ActiveNode {
                id: e.node.id,
                theta,
                kind: e.node.kind,
                m,
                down: group_start,
                up: k_plus - group_end,
            });
        }
        group_start = group_end;
    }
    Ok(CountStats { nodes, k_plus, d })
}

/// Active order values sorted ascending, framed by the sentinels 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedOrders {
    values: Vec<f64>,
}

impl SortedOrders {
    pub fn from_stats(stats: &CountStats) -> Self {
        let mut values = Vec::with_capacity(stats.k_plus + 2);
        values.push(0.0);
        values.extend(stats.nodes.iter().map(|n| n.theta));
        values.push(1.0);
        SortedOrders { values }
    }

    pub fn from_dag(dag: &OrderedDag) -> Result<Self> {
        Ok(Self::from_stats(&count_stats(dag)?))
    }

    /// All values including both sentinels.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn active(&self) -> &[f64] {
        &self.values[1..self.values.len() - 1]
    }

    /// Number of intervals, K⁺ + 1.
    pub fn interval_count(&self) -> usize {
        self.values.len() - 1
    }

    /// Interval `j` spans the j-th and (j+1)-th sorted values, j = 0..=K⁺.
    pub fn interval(&self, j: usize) -> (f64, f64) {
        (self.values[j], self.values[j + 1])
    }

    pub fn interval_length(&self, j: usize) -> f64 {
        let (lo, hi) = self.interval(j);
        hi - lo
    }

    /// Index of the interval whose interior contains `theta`, if any.
    pub fn locate(&self, theta: f64) -> Option<usize> {
        (0..self.interval_count()).find(|&j| {
            let (lo, hi) = self.interval(j);
            lo < theta && theta < hi
        })
    }
}

/// Random fully active DAG with at most `max_nodes` nodes, distinct order
/// values and at least one observed node. Edges respecting the order are
/// included independently with probability `edge_prob`.
pub fn random_active_dag<R: Rng + ?Sized>(
    rng: &mut R,
    max_nodes: usize,
    edge_prob: f64,
) -> OrderedDag {
    loop {
        let n = rng.random_range(1..=max_nodes.max(1));
        let d = rng.random_range(1..=n);
        let mut dag = OrderedDag::new();
        let mut ids = Vec::with_capacity(n);
        for j in 0..n {
            let kind = if j < d {
                NodeKind::Observed
            } else {
                NodeKind::Hidden
            };
            let theta: f64 = rng.random_range(0.001..0.999);
            ids.push(dag.add_node(theta, kind).unwrap());
        }
        for &p in &ids {
            for &c in &ids {
                let (tp, tc) = (dag.node(p).unwrap().theta, dag.node(c).unwrap().theta);
                if tp > tc && rng.random_bool(edge_prob) {
                    dag.add_edge(p, c).unwrap();
                }
            }
        }
        dag.prune_inactive();
        if count_stats(&dag).is_ok() {
            return dag;
        }
    }
}
