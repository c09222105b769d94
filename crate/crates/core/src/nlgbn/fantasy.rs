//! Ancestral sampling of new data from posterior draws.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::data::Dataset;
use super::unit::sigmoid;
use crate::chain::{ChainSample, ParamsRecord};
use crate::error::{IcpError, Result};
use crate::graph::{NodeId, OrderedDag};
use crate::rng::RngStream;

struct Network {
    order: Vec<NodeId>,
    parents: BTreeMap<NodeId, Vec<(NodeId, f64)>>,
    biases: BTreeMap<NodeId, f64>,
    precisions: BTreeMap<NodeId, f64>,
    observed: Vec<NodeId>,
}

impl Network {
    fn build(dag: &OrderedDag, params: &ParamsRecord) -> Result<Self> {
        let weights: BTreeMap<(u64, u64), f64> = params.weights.iter().map(|(p, c, w)| ((*p, *c), *w)).collect();
        let biases: BTreeMap<NodeId, f64> = params.biases.iter().map(|(n, b)| (NodeId(*n), *b)).collect();
        let precisions: BTreeMap<NodeId, f64> = params.precisions.iter().map(|(n, r)| (NodeId(*n), *r)).collect();
        let mut parents = BTreeMap::new();
        for node in dag.nodes() {
            if !biases.contains_key(&node.id) || !precisions.contains_key(&node.id) {
                return Err(IcpError::InvalidArgument(format!("no parameters for {}", node.id)));
            }
            let list = dag
                .parents(node.id)
                .iter()
                .map(|p| {
                    weights
                        .get(&(p.0, node.id.0))
                        .map(|w| (*p, *w))
                        .ok_or_else(|| IcpError::InvalidArgument(format!("no weight on {p} -> {}", node.id)))
                })
                .collect::<Result<Vec<_>>>()?;
            parents.insert(node.id, list);
        }
        Ok(Network {
            order: dag.descending_order(),
            parents,
            biases,
            precisions,
            observed: dag.observed().map(|n| n.id).collect(),
        })
    }

    fn draw_row(&self, rng: &mut RngStream) -> Vec<f64> {
        let mut out: BTreeMap<NodeId, f64> = BTreeMap::new();
        for id in &self.order {
            let mean = self.biases[id] + self.parents[id].iter().map(|(p, w)| w * out[p]).sum::<f64>();
            let z: f64 = StandardNormal.sample(rng);
            out.insert(*id, sigmoid(mean + z / self.precisions[id].sqrt()));
        }
        self.observed.iter().map(|id| out[id]).collect()
    }
}

/// Draws `n` rows, each from a uniformly chosen posterior sample, mapped back
/// to the original data scale.
pub fn fantasy(samples: &[ChainSample], n: usize, rng: &mut RngStream) -> Result<Dataset> {
    if samples.is_empty() {
        return Err(IcpError::InvalidArgument("no posterior samples".into()));
    }
    let mut nets = Vec::with_capacity(samples.len());
    for s in samples {
        let params = s
            .params
            .as_ref()
            .ok_or_else(|| IcpError::InvalidArgument(format!("sample {} has no network parameters", s.iter)))?;
        let rescale = params
            .rescale
            .clone()
            .ok_or_else(|| IcpError::InvalidArgument(format!("sample {} has no rescale", s.iter)))?;
        let net = Network::build(&s.dag()?, params)?;
        if net.observed.len() != rescale.dim() {
            return Err(IcpError::InvalidArgument("rescale does not match the observed nodes".into()));
        }
        nets.push((net, rescale));
    }
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let (net, rescale) = &nets[rng.random_range(0..nets.len())];
        let row = net.draw_row(rng);
        rows.push(row.iter().enumerate().map(|(j, y)| rescale.inverse(j, *y)).collect());
    }
    if rows.is_empty() {
        let dim = nets[0].1.dim();
        return Dataset::empty(dim);
    }
    Dataset::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeKind;
    use crate::hyperparams::Hyperparams;
    use crate::nlgbn::Rescale;

    fn sample(bias: f64, precision: f64) -> ChainSample {
        let mut dag = OrderedDag::new();
        dag.add_node(0.0, NodeKind::Observed).unwrap();
        ChainSample {
            iter: 0,
            logp: 0.0,
            graph: dag.to_record(),
            hypers: Hyperparams::new(1.0, 1.0, 1.0).unwrap(),
            params: Some(ParamsRecord {
                weights: vec![],
                biases: vec![(0, bias)],
                precisions: vec![(0, precision)],
                rescale: Some(Rescale {
                    lo: vec![10.0],
                    span: vec![2.0],
                    margin: 0.0,
                }),
            }),
        }
    }

    #[test]
    fn single_unit_median_matches_bias() {
        let mut rng = RngStream::new(1);
        let data = fantasy(&[sample(0.5, 4.0)], 20_000, &mut rng).unwrap();
        let mut col = data.column(0);
        col.sort_by(f64::total_cmp);
        let median = col[col.len() / 2];
        let expected = 10.0 + 2.0 * sigmoid(0.5);
        assert!((median - expected).abs() < 0.01, "{median} vs {expected}");
        assert!(col.iter().all(|x| *x > 10.0 && *x < 12.0));
    }

    #[test]
    fn missing_params_is_an_error() {
        let mut s = sample(0.0, 1.0);
        s.params = None;
        assert!(fantasy(&[s], 3, &mut RngStream::new(1)).is_err());
        assert!(fantasy(&[], 3, &mut RngStream::new(1)).is_err());
    }
}
