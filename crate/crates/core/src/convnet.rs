//! Mapping from an ordered DAG to a convolutional architecture description.
//!
//! A node at order value θ becomes a tensor whose channel count doubles and
//! whose side length halves with every one of the ⌊bins·(1 − θ)⌋ steps
//! below the input. The input node sits at θ = 1 and the output node at
//! θ = 0 is a softmax over a fully connected layer.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{IcpError, Result};
use crate::graph::{NodeId, OrderedDag};

/// Default spatial kernel size of every convolution.
pub const DEFAULT_KERNEL: usize = 3;
/// Default number of classes of the output node.
pub const DEFAULT_CLASSES: usize = 10;

fn steps(theta: f64, n_bins: u32) -> Result<u32> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(IcpError::Domain(format!("order value {theta} outside [0, 1]")));
    }
    if n_bins == 0 {
        return Err(IcpError::Domain("bin count must be at least 1".into()));
    }
    let s = (f64::from(n_bins) * (1.0 - theta)).floor() as u32;
    if s >= 63 {
        return Err(IcpError::Domain(format!("{s} halving steps overflow")));
    }
    Ok(s)
}

/// 2^⌊bins·(1 − θ)⌋ + n0.
pub fn compute_channels(theta: f64, n_bins: u32, n0: u64) -> Result<u64> {
    Ok((1u64 << steps(theta, n_bins)?) + n0)
}

/// m / 2^⌊bins·(1 − θ)⌋; fails unless the division is exact.
pub fn compute_pixels(theta: f64, n_bins: u32, m: u64) -> Result<u64> {
    let div = 1u64 << steps(theta, n_bins)?;
    if m == 0 || !m.is_multiple_of(div) {
        return Err(IcpError::Domain(format!(
            "{m} pixels are not divisible by {div} at order value {theta}"
        )));
    }
    Ok(m / div)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerRole {
    Input,
    Hidden,
    Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub id: u64,
    pub theta: f64,
    pub role: LayerRole,
    pub channels: u64,
    pub pixels: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EdgeOp {
    /// Convolution followed by pooling of the given factor (1 means none).
    Conv { kernel: usize, pool: u64 },
    /// Flatten and fully connect into the output logits.
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub from: u64,
    pub to: u64,
    pub in_shape: [u64; 2],
    pub out_shape: [u64; 2],
    pub op: EdgeOp,
}

/// Architecture of the network; shapes are `[channels, pixels]`. Each hidden
/// tensor is the ReLU of the sum of its incoming edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub input: u64,
    pub output: u64,
    pub n_bins: u32,
    pub n0: u64,
    pub m: u64,
    pub layers: Vec<LayerSpec>,
    pub edges: Vec<EdgeSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchOptions {
    pub kernel: usize,
    pub classes: usize,
}

impl Default for ArchOptions {
    fn default() -> Self {
        ArchOptions {
            kernel: DEFAULT_KERNEL,
            classes: DEFAULT_CLASSES,
        }
    }
}

fn unique_at(dag: &OrderedDag, theta: f64, what: &str) -> Result<NodeId> {
    let mut hits = dag.nodes().filter(|n| n.theta == theta);
    match (hits.next(), hits.next()) {
        (Some(n), None) => Ok(n.id),
        (None, _) => Err(IcpError::InvalidGraph(format!("no {what} node at order value {theta}"))),
        _ => Err(IcpError::InvalidGraph(format!("several {what} nodes at order value {theta}"))),
    }
}

fn reach(start: NodeId, next: impl Fn(NodeId) -> Vec<NodeId>) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::from([start]);
    let mut stack = vec![start];
    while let Some(id) = stack.pop() {
        for n in next(id) {
            if seen.insert(n) {
                stack.push(n);
            }
        }
    }
    seen
}

pub fn dag_to_arch(dag: &OrderedDag, n_bins: u32, n0: u64, m: u64, opts: ArchOptions) -> Result<ArchSpec> {
    let input = unique_at(dag, 1.0, "input")?;
    let output = unique_at(dag, 0.0, "output")?;
    let below = reach(input, |id| dag.children(id).to_vec());
    if !below.contains(&output) {
        return Err(IcpError::InvalidGraph("output is not reachable from the input".into()));
    }
    let above = reach(output, |id| dag.parents(id).to_vec());
    let keep: BTreeSet<NodeId> = below.intersection(&above).copied().collect();
    let mut layers = Vec::new();
    let mut shapes = BTreeMap::new();
    for id in &keep {
        let node = dag.node(*id).ok_or(IcpError::UnknownNode(*id))?;
        let (role, channels, pixels) = if *id == output {
            (LayerRole::Output, opts.classes as u64, 1)
        } else {
            let role = if *id == input { LayerRole::Input } else { LayerRole::Hidden };
            (role, compute_channels(node.theta, n_bins, n0)?, compute_pixels(node.theta, n_bins, m)?)
        };
        shapes.insert(*id, [channels, pixels]);
        layers.push(LayerSpec {
            id: id.0,
            theta: node.theta,
            role,
            channels,
            pixels,
        });
    }
    let mut edges = Vec::new();
    for (from, to) in dag.edges() {
        if !(keep.contains(&from) && keep.contains(&to)) {
            continue;
        }
        let (in_shape, out_shape) = (shapes[&from], shapes[&to]);
        let op = if to == output {
            EdgeOp::Dense
        } else {
            EdgeOp::Conv {
                kernel: opts.kernel,
                pool: in_shape[1] / out_shape[1],
            }
        };
        edges.push(EdgeSpec {
            from: from.0,
            to: to.0,
            in_shape,
            out_shape,
            op,
        });
    }
    Ok(ArchSpec {
        input: input.0,
        output: output.0,
        n_bins,
        n0,
        m,
        layers,
        edges,
    })
}

impl ArchSpec {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    fn children(&self) -> BTreeMap<u64, Vec<u64>> {
        let mut out: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        for e in &self.edges {
            out.entry(e.from).or_default().push(e.to);
        }
        out
    }

    /// Layers from the input downwards, parents before children.
    fn topological(&self) -> Vec<u64> {
        let mut layers: Vec<&LayerSpec> = self.layers.iter().collect();
        layers.sort_by(|a, b| b.theta.total_cmp(&a.theta).then(a.id.cmp(&b.id)));
        layers.iter().map(|l| l.id).collect()
    }

    /// Number of directed input-to-output paths.
    pub fn width(&self) -> u128 {
        let children = self.children();
        let mut paths: BTreeMap<u64, u128> = BTreeMap::from([(self.input, 1)]);
        for id in self.topological() {
            let here = paths.get(&id).copied().unwrap_or(0);
            for c in children.get(&id).into_iter().flatten() {
                *paths.entry(*c).or_default() += here;
            }
        }
        paths.get(&self.output).copied().unwrap_or(0)
    }

    /// Edge count of the longest input-to-output path.
    pub fn depth(&self) -> usize {
        let children = self.children();
        let mut longest: BTreeMap<u64, usize> = BTreeMap::from([(self.input, 0)]);
        for id in self.topological() {
            let Some(&here) = longest.get(&id) else {
                continue;
            };
            for c in children.get(&id).into_iter().flatten() {
                let entry = longest.entry(*c).or_default();
                *entry = (*entry).max(here + 1);
            }
        }
        longest.get(&self.output).copied().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeKind;
    use crate::rng::RngStream;
    use rand::Rng;

    #[test]
    fn shape_formulas() {
        assert_eq!(compute_channels(0.0, 5, 4).unwrap(), 36);
        assert_eq!(compute_channels(1.0, 5, 4).unwrap(), 5);
        assert_eq!(compute_pixels(1.0, 5, 784).unwrap(), 784);
        assert!(compute_pixels(0.0, 5, 784).is_err());
        assert_eq!(compute_pixels(0.5, 5, 784).unwrap(), 196);
        assert!(compute_channels(1.5, 5, 4).is_err());
        assert!(compute_channels(0.5, 0, 4).is_err());
    }

    #[test]
    fn channels_never_increase_with_theta() {
        let mut last = u64::MAX;
        for i in 0..=1000 {
            let c = compute_channels(i as f64 / 1000.0, 7, 3).unwrap();
            assert!(c <= last);
            last = c;
        }
    }

    fn endpoints() -> (OrderedDag, NodeId, NodeId) {
        let mut dag = OrderedDag::new();
        let y = dag.add_node(0.0, NodeKind::Observed).unwrap();
        let x = dag.add_node(1.0, NodeKind::Observed).unwrap();
        (dag, x, y)
    }

    #[test]
    fn direct_link_is_a_single_classifier() {
        let (mut dag, x, y) = endpoints();
        dag.add_edge(x, y).unwrap();
        let arch = dag_to_arch(&dag, 5, 4, 784, ArchOptions::default()).unwrap();
        assert_eq!(arch.edges.len(), 1);
        assert_eq!(arch.edges[0].op, EdgeOp::Dense);
        assert_eq!(arch.width(), 1);
        assert_eq!(arch.depth(), 1);
    }

    #[test]
    fn chain_through_middle_layer() {
        let (mut dag, x, y) = endpoints();
        let h = dag.add_node(0.5, NodeKind::Hidden).unwrap();
        dag.add_edge(x, h).unwrap();
        dag.add_edge(h, y).unwrap();
        let arch = dag_to_arch(&dag, 5, 4, 784, ArchOptions::default()).unwrap();
        let mid = arch.layers.iter().find(|l| l.id == h.0).unwrap();
        assert_eq!((mid.channels, mid.pixels), (8, 196));
        let conv = arch.edges.iter().find(|e| e.to == h.0).unwrap();
        assert_eq!(conv.op, EdgeOp::Conv { kernel: 3, pool: 4 });
        assert_eq!(ArchSpec::from_json(&arch.to_json().unwrap()).unwrap(), arch);
    }

    #[test]
    fn unreachable_nodes_are_dropped() {
        let (mut dag, x, y) = endpoints();
        dag.add_edge(x, y).unwrap();
        let stray = dag.add_node(0.7, NodeKind::Hidden).unwrap();
        dag.add_edge(stray, y).unwrap();
        let arch = dag_to_arch(&dag, 5, 4, 784, ArchOptions::default()).unwrap();
        assert!(arch.layers.iter().all(|l| l.id != stray.0));
    }

    #[test]
    fn missing_endpoints_are_errors() {
        let mut dag = OrderedDag::new();
        dag.add_node(0.0, NodeKind::Observed).unwrap();
        assert!(dag_to_arch(&dag, 5, 4, 784, ArchOptions::default()).is_err());
    }

    fn enumerate_paths(arch: &ArchSpec) -> Vec<usize> {
        fn walk(arch: &ArchSpec, at: u64, len: usize, out: &mut Vec<usize>) {
            if at == arch.output {
                out.push(len);
                return;
            }
            for e in arch.edges.iter().filter(|e| e.from == at) {
                walk(arch, e.to, len + 1, out);
            }
        }
        let mut out = Vec::new();
        walk(arch, arch.input, 0, &mut out);
        out
    }

    #[test]
    fn width_and_depth_match_path_enumeration() {
        let mut rng = RngStream::new(17);
        for _ in 0..200 {
            let (mut dag, x, y) = endpoints();
            let hidden: Vec<NodeId> = (0..rng.random_range(0..9))
                .map(|_| dag.add_node(rng.random_range(0.01..0.99), NodeKind::Hidden).unwrap())
                .collect();
            let all: Vec<NodeId> = [x].into_iter().chain(hidden).chain([y]).collect();
            for a in &all {
                for b in &all {
                    let (ta, tb) = (dag.node(*a).unwrap().theta, dag.node(*b).unwrap().theta);
                    if ta > tb && rng.random_bool(0.4) {
                        dag.add_edge(*a, *b).unwrap();
                    }
                }
            }
            let Ok(arch) = dag_to_arch(&dag, 3, 2, 64, ArchOptions::default()) else {
                continue;
            };
            let paths = enumerate_paths(&arch);
            assert_eq!(arch.width(), paths.len() as u128);
            assert_eq!(arch.depth(), paths.iter().copied().max().unwrap_or(0));
            for l in arch.layers.iter().filter(|l| l.role != LayerRole::Output) {
                assert_eq!(l.channels, compute_channels(l.theta, 3, 2).unwrap());
                assert_eq!(l.pixels, compute_pixels(l.theta, 3, 64).unwrap());
            }
        }
    }
}
