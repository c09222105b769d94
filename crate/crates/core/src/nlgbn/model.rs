//! Sigmoid belief network likelihood as a structure-sampler hook.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::data::{Dataset, Rescale};
use super::state::{log_precision_prior, NlgbnState, PRECISION_RATE, PRECISION_SHAPE};
use super::unit::{logit, sigmoid, softplus};
use crate::chain::ParamsRecord;
use crate::error::{IcpError, Result};
use crate::graph::{NodeId, NodeKind, OrderedDag};
use crate::hyperparams::Hyperparams;
use crate::mcmc::{LikelihoodHook, StructureChange};
use crate::rng::RngStream;
use crate::special::log_normal_density;

const LN_TAU: f64 = 1.837_877_066_409_345_5;

/// How structure moves treat the regression of the affected child.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructureMode {
    /// Weights and bias integrated out; redrawn from their conditional on
    /// acceptance.
    #[default]
    Collapsed,
    /// New weights drawn from their prior and carried along.
    Prior,
}

/// Update used for weights, biases and precisions at fixed structure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
#[derive(Default)]
pub enum ParamUpdate {
    /// Gaussian draw of bias and weights, then Gamma draw of the precision.
    #[default]
    Conjugate,
    /// Single-site Metropolis steps; log-scale for precisions.
    RandomWalk {
        weight_step: f64,
        bias_step: f64,
        log_precision_step: f64,
    },
}


#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NlgbnConfig {
    pub structure: StructureMode,
    pub params: ParamUpdate,
    /// Starting random-walk scale for hidden preactivations.
    pub activation_step: f64,
    /// Acceptance rate that activation steps are tuned towards during burn-in.
    pub activation_target: f64,
    /// Parameter and activation passes per structure sweep.
    pub passes: usize,
}

impl Default for NlgbnConfig {
    fn default() -> Self {
        NlgbnConfig {
            structure: StructureMode::Collapsed,
            params: ParamUpdate::Conjugate,
            activation_step: 1.0,
            activation_target: 0.44,
            passes: 1,
        }
    }
}

#[derive(Debug, Clone)]
struct Unit {
    observed: bool,
    bias: f64,
    precision: f64,
    weights: BTreeMap<NodeId, f64>,
    a: Vec<f64>,
    u: Vec<f64>,
    /// bias + Σ weight · parent output, per datum.
    mu: Vec<f64>,
}

impl Unit {
    fn residual_sq(&self) -> f64 {
        self.a.iter().zip(&self.mu).map(|(a, m)| (a - m) * (a - m)).sum()
    }

    fn log_density(&self) -> f64 {
        let n = self.a.len() as f64;
        let gauss = 0.5 * n * (self.precision.ln() - LN_TAU) - 0.5 * self.precision * self.residual_sq();
        let jac: f64 = self.a.iter().map(|a| softplus(*a) + softplus(-*a)).sum();
        let mut priors = log_normal_density(self.bias, 0.0, 1.0) + log_precision_prior(self.precision);
        priors += self.weights.values().map(|w| log_normal_density(*w, 0.0, 1.0)).sum::<f64>();
        gauss + jac + priors
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Col {
    One,
    Out(NodeId),
}

/// Memoized inner products between regressor columns and targets. Valid until
/// outputs or preactivations change.
#[derive(Debug, Default, Clone)]
struct GramCache {
    cols: BTreeMap<(Col, Col), f64>,
    targets: BTreeMap<(Col, NodeId), f64>,
    self_dots: BTreeMap<NodeId, f64>,
}

impl GramCache {
    fn clear(&mut self) {
        self.cols.clear();
        self.targets.clear();
        self.self_dots.clear();
    }

    fn purge(&mut self, id: NodeId) {
        let c = Col::Out(id);
        self.cols.retain(|(x, y), _| *x != c && *y != c);
        self.targets.retain(|(x, t), _| *x != c && *t != id);
        self.self_dots.remove(&id);
    }
}

#[derive(Debug, Default, Clone)]
struct Pending {
    unit: Option<(NodeId, Unit)>,
    weight: Option<f64>,
}

/// Acceptance counts of the hook's own updates.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NlgbnStats {
    pub activation_proposed: u64,
    pub activation_accepted: u64,
    pub param_proposed: u64,
    pub param_accepted: u64,
}

/// Network parameters and hidden activations for a fixed dataset.
///
/// Observed nodes in ascending id order are tied to the data columns in
/// order; observed values are rescaled into (0, 1) before use.
#[derive(Debug, Clone)]
pub struct NlgbnModel {
    config: NlgbnConfig,
    rescale: Rescale,
    n: usize,
    units: BTreeMap<NodeId, Unit>,
    steps: BTreeMap<NodeId, f64>,
    gram: GramCache,
    pending: Pending,
    adapting: bool,
    pub stats: NlgbnStats,
}

fn normal(rng: &mut RngStream) -> f64 {
    StandardNormal.sample(rng)
}

fn gamma_draw(shape: f64, rate: f64, rng: &mut RngStream) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| IcpError::Domain(e.to_string()))?;
    // a zero draw would leave the precision outside its support
    Ok(g.sample(rng).max(f64::MIN_POSITIVE))
}

fn check_columns(dag: &OrderedDag, dim: usize) -> Result<()> {
    let observed = dag.observed().count();
    if observed != dim {
        return Err(IcpError::InvalidArgument(format!(
            "graph has {observed} observed nodes but the data has {dim} columns"
        )));
    }
    Ok(())
}

/// `d` parentless observed nodes at order value 0, ids 0..d.
pub fn initial_dag(d: usize) -> Result<OrderedDag> {
    let mut dag = OrderedDag::new();
    for _ in 0..d {
        dag.add_node(0.0, NodeKind::Observed)?;
    }
    Ok(dag)
}

impl NlgbnModel {
    /// Fits the rescale to `data`, draws hidden activations from N(0, 1) and
    /// runs one conjugate parameter update.
    pub fn new(dag: &OrderedDag, data: &Dataset, config: NlgbnConfig, rng: &mut RngStream) -> Result<Self> {
        let rescale = Rescale::fit(data)?;
        let scaled = rescale.apply(data)?;
        check_columns(dag, scaled.len())?;
        let n = data.len();
        let mut units = BTreeMap::new();
        let mut col = 0;
        for node in dag.nodes() {
            let (a, u) = if node.is_observed() {
                let u = scaled[col].clone();
                col += 1;
                (u.iter().map(|x| logit(*x)).collect(), u)
            } else {
                let a: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
                let u = a.iter().map(|x| sigmoid(*x)).collect();
                (a, u)
            };
            let weights = dag.parents(node.id).iter().map(|p| (*p, 0.0)).collect();
            units.insert(
                node.id,
                Unit {
                    observed: node.is_observed(),
                    bias: 0.0,
                    precision: 1.0,
                    weights,
                    a,
                    u,
                    mu: vec![0.0; n],
                },
            );
        }
        let steps = dag
            .nodes()
            .filter(|n| !n.is_observed())
            .map(|n| (n.id, config.activation_step))
            .collect();
        let mut model = NlgbnModel {
            config,
            rescale,
            n,
            units,
            steps,
            gram: GramCache::default(),
            pending: Pending::default(),
            adapting: false,
            stats: NlgbnStats::default(),
        };
        let ids: Vec<NodeId> = model.units.keys().copied().collect();
        for id in ids {
            model.conjugate_update(id, dag.parents(id), rng)?;
        }
        Ok(model)
    }

    /// Builds a model from an explicit state; `scaled` holds the rescaled
    /// observations column by column.
    pub fn from_state(
        dag: &OrderedDag,
        state: &NlgbnState,
        scaled: &[Vec<f64>],
        rescale: Rescale,
        config: NlgbnConfig,
    ) -> Result<Self> {
        let n = scaled.first().map(|c| c.len()).unwrap_or(0);
        check_columns(dag, scaled.len())?;
        state.check_consistent(dag, n)?;
        let outputs = state.outputs(dag, scaled)?;
        let mut units = BTreeMap::new();
        for node in dag.nodes() {
            let u = outputs[&node.id].clone();
            let a = match state.preactivations.get(&node.id) {
                Some(a) => a.clone(),
                None => u.iter().map(|x| logit(*x)).collect(),
            };
            let weights = dag
                .parents(node.id)
                .iter()
                .map(|p| (*p, state.weights[&(*p, node.id)]))
                .collect();
            units.insert(
                node.id,
                Unit {
                    observed: node.is_observed(),
                    bias: state.biases[&node.id],
                    precision: state.precisions[&node.id],
                    weights,
                    a,
                    u,
                    mu: Vec::new(),
                },
            );
        }
        let steps = dag
            .nodes()
            .filter(|n| !n.is_observed())
            .map(|n| (n.id, config.activation_step))
            .collect();
        let mut model = NlgbnModel {
            config,
            rescale,
            n,
            units,
            steps,
            gram: GramCache::default(),
            pending: Pending::default(),
            adapting: false,
            stats: NlgbnStats::default(),
        };
        let ids: Vec<NodeId> = model.units.keys().copied().collect();
        for id in ids {
            model.recompute_mean(id);
        }
        Ok(model)
    }

    pub fn rescale(&self) -> &Rescale {
        &self.rescale
    }

    pub fn config(&self) -> &NlgbnConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Current adaptive step of a hidden node's activation updates.
    pub fn activation_step(&self, id: NodeId) -> Option<f64> {
        self.steps.get(&id).copied()
    }

    /// Rescaled observations, column by column.
    pub fn scaled_data(&self) -> Vec<Vec<f64>> {
        self.units.values().filter(|u| u.observed).map(|u| u.u.clone()).collect()
    }

    pub fn state(&self) -> NlgbnState {
        let mut state = NlgbnState {
            weights: BTreeMap::new(),
            biases: BTreeMap::new(),
            precisions: BTreeMap::new(),
            preactivations: BTreeMap::new(),
        };
        for (id, unit) in &self.units {
            state.biases.insert(*id, unit.bias);
            state.precisions.insert(*id, unit.precision);
            for (p, w) in &unit.weights {
                state.weights.insert((*p, *id), *w);
            }
            if !unit.observed {
                state.preactivations.insert(*id, unit.a.clone());
            }
        }
        state
    }

    fn unit(&self, id: NodeId) -> Result<&Unit> {
        self.units.get(&id).ok_or(IcpError::UnknownNode(id))
    }

    fn unit_mut(&mut self, id: NodeId) -> Result<&mut Unit> {
        self.units.get_mut(&id).ok_or(IcpError::UnknownNode(id))
    }

    fn lookup(&self, id: NodeId) -> Option<&Unit> {
        self.units.get(&id).or(match &self.pending.unit {
            Some((pid, unit)) if *pid == id => Some(unit),
            _ => None,
        })
    }

    fn outputs_of(&self, id: NodeId) -> Result<&[f64]> {
        self.lookup(id).map(|u| u.u.as_slice()).ok_or(IcpError::UnknownNode(id))
    }

    fn col_dot(&mut self, x: Col, y: Col) -> Result<f64> {
        let key = if x <= y { (x, y) } else { (y, x) };
        if let Some(v) = self.gram.cols.get(&key) {
            return Ok(*v);
        }
        let v = match key {
            (Col::One, Col::One) => self.n as f64,
            (Col::One, Col::Out(k)) | (Col::Out(k), Col::One) => self.outputs_of(k)?.iter().sum(),
            (Col::Out(j), Col::Out(k)) => {
                let (uj, uk) = (self.outputs_of(j)?, self.outputs_of(k)?);
                uj.iter().zip(uk).map(|(a, b)| a * b).sum()
            }
        };
        self.gram.cols.insert(key, v);
        Ok(v)
    }

    fn target_dot(&mut self, x: Col, target: NodeId) -> Result<f64> {
        if let Some(v) = self.gram.targets.get(&(x, target)) {
            return Ok(*v);
        }
        let a = &self.unit(target)?.a;
        let v = match x {
            Col::One => a.iter().sum(),
            Col::Out(k) => {
                let uk = self.outputs_of(k)?;
                a.iter().zip(uk).map(|(a, b)| a * b).sum()
            }
        };
        self.gram.targets.insert((x, target), v);
        Ok(v)
    }

    fn self_dot(&mut self, target: NodeId) -> Result<f64> {
        if let Some(v) = self.gram.self_dots.get(&target) {
            return Ok(*v);
        }
        let v = self.unit(target)?.a.iter().map(|a| a * a).sum();
        self.gram.self_dots.insert(target, v);
        Ok(v)
    }

    /// Precision matrix I + ρXᵀX and Xᵀa of `target`'s regression on a bias
    /// column and `parents`.
    fn normal_equations(&mut self, target: NodeId, parents: &[NodeId]) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let rho = self.unit(target)?.precision;
        let cols: Vec<Col> = std::iter::once(Col::One)
            .chain(parents.iter().map(|p| Col::Out(*p)))
            .collect();
        let p = cols.len();
        let mut prec = DMatrix::identity(p, p);
        let mut xa = DVector::zeros(p);
        for i in 0..p {
            for j in i..p {
                let g = rho * self.col_dot(cols[i], cols[j])?;
                prec[(i, j)] += g;
                if i != j {
                    prec[(j, i)] += g;
                }
            }
            xa[i] = self.target_dot(cols[i], target)?;
        }
        Ok((prec, xa))
    }

    /// Log-density of `target`'s preactivations with bias and weights on
    /// `parents` integrated out against their N(0, 1) priors.
    fn log_marginal(&mut self, target: NodeId, parents: &[NodeId]) -> Result<f64> {
        let rho = self.unit(target)?.precision;
        let (prec, xa) = self.normal_equations(target, parents)?;
        let aa = self.self_dot(target)?;
        let chol = prec
            .cholesky()
            .ok_or_else(|| IcpError::Internal("regression precision not positive definite".into()))?;
        let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let sol = chol.solve(&xa);
        let quad = rho * aa - rho * rho * xa.dot(&sol);
        let n = self.n as f64;
        Ok(0.5 * n * (rho.ln() - LN_TAU) - 0.5 * logdet - 0.5 * quad)
    }

    /// Draws bias and weights of `target` from their Gaussian conditional.
    fn redraw_regression(&mut self, target: NodeId, parents: &[NodeId], rng: &mut RngStream) -> Result<()> {
        let rho = self.unit(target)?.precision;
        let (prec, xa) = self.normal_equations(target, parents)?;
        let chol = prec
            .cholesky()
            .ok_or_else(|| IcpError::Internal("regression precision not positive definite".into()))?;
        let mean = chol.solve(&xa) * rho;
        let z = DVector::from_fn(mean.len(), |_, _| normal(rng));
        let noise = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| IcpError::Internal("singular Cholesky factor".into()))?;
        let beta = mean + noise;
        let unit = self.unit_mut(target)?;
        unit.bias = beta[0];
        unit.weights = parents.iter().enumerate().map(|(i, p)| (*p, beta[i + 1])).collect();
        self.recompute_mean(target);
        Ok(())
    }

    fn conjugate_update(&mut self, target: NodeId, parents: &[NodeId], rng: &mut RngStream) -> Result<()> {
        self.redraw_regression(target, parents, rng)?;
        let unit = self.unit(target)?;
        let ssr = unit.residual_sq();
        let rho = gamma_draw(PRECISION_SHAPE + 0.5 * self.n as f64, PRECISION_RATE + 0.5 * ssr, rng)?;
        self.unit_mut(target)?.precision = rho;
        Ok(())
    }

    fn recompute_mean(&mut self, target: NodeId) {
        let unit = &self.units[&target];
        let mut mu = vec![unit.bias; self.n];
        for (p, w) in &unit.weights {
            let up = &self.units[p].u;
            for (m, u) in mu.iter_mut().zip(up) {
                *m += w * u;
            }
        }
        self.units.get_mut(&target).expect("unit exists").mu = mu;
    }

    /// Change in `target`'s Gaussian term when its mean shifts by `delta`
    /// times `column`.
    fn shift_log_density(unit: &Unit, column: &[f64], delta: f64) -> f64 {
        let mut acc = 0.0;
        for ((a, m), x) in unit.a.iter().zip(&unit.mu).zip(column) {
            let r = a - m;
            let s = delta * x;
            acc += s * s - 2.0 * s * r;
        }
        -0.5 * unit.precision * acc
    }

    fn edge_shift(&self, parent: NodeId, child: NodeId, delta: f64) -> Result<f64> {
        let column = self.outputs_of(parent)?;
        Ok(Self::shift_log_density(self.unit(child)?, column, delta))
    }

    /// Parentless hidden unit with parameters and activations from the prior.
    fn draw_orphan(&self, rng: &mut RngStream) -> Result<Unit> {
        let rho = gamma_draw(PRECISION_SHAPE, PRECISION_RATE, rng)?;
        let bias = normal(rng);
        let sd = rho.sqrt().recip();
        let a: Vec<f64> = (0..self.n).map(|_| bias + sd * normal(rng)).collect();
        let u = a.iter().map(|x| sigmoid(*x)).collect();
        Ok(Unit {
            observed: false,
            bias,
            precision: rho,
            weights: BTreeMap::new(),
            a,
            u,
            mu: vec![bias; self.n],
        })
    }

    fn link_delta(
        &mut self,
        before: &OrderedDag,
        after: &OrderedDag,
        parent: NodeId,
        child: NodeId,
        adding: bool,
        rng: &mut RngStream,
    ) -> Result<f64> {
        match self.config.structure {
            StructureMode::Collapsed => {
                let old = self.log_marginal(child, before.parents(child))?;
                let new = self.log_marginal(child, after.parents(child))?;
                Ok(new - old)
            }
            StructureMode::Prior if adding => {
                let w = normal(rng);
                self.pending.weight = Some(w);
                self.edge_shift(parent, child, w)
            }
            StructureMode::Prior => {
                let w = *self
                    .unit(child)?
                    .weights
                    .get(&parent)
                    .ok_or(IcpError::InvalidEdge {
                        parent,
                        child,
                        reason: "edge has no weight",
                    })?;
                self.edge_shift(parent, child, -w)
            }
        }
    }

    fn link(&mut self, after: &OrderedDag, parent: NodeId, child: NodeId, rng: &mut RngStream) -> Result<()> {
        match self.config.structure {
            StructureMode::Collapsed => self.redraw_regression(child, after.parents(child), rng),
            StructureMode::Prior => {
                let w = self
                    .pending
                    .weight
                    .take()
                    .ok_or_else(|| IcpError::Internal("accepted edge without a proposed weight".into()))?;
                let column = self.unit(parent)?.u.clone();
                let unit = self.unit_mut(child)?;
                unit.weights.insert(parent, w);
                for (m, x) in unit.mu.iter_mut().zip(&column) {
                    *m += w * x;
                }
                Ok(())
            }
        }
    }

    fn unlink(&mut self, after: &OrderedDag, parent: NodeId, child: NodeId, rng: &mut RngStream) -> Result<()> {
        match self.config.structure {
            StructureMode::Collapsed => self.redraw_regression(child, after.parents(child), rng),
            StructureMode::Prior => {
                let column = self.unit(parent)?.u.clone();
                let unit = self.unit_mut(child)?;
                let w = unit.weights.remove(&parent).unwrap_or(0.0);
                for (m, x) in unit.mu.iter_mut().zip(&column) {
                    *m -= w * x;
                }
                Ok(())
            }
        }
    }

    fn random_walk_update(
        &mut self,
        target: NodeId,
        steps: (f64, f64, f64),
        rng: &mut RngStream,
    ) -> Result<()> {
        let (weight_step, bias_step, log_precision_step) = steps;
        let parents: Vec<NodeId> = self.unit(target)?.weights.keys().copied().collect();
        let ones = vec![1.0; self.n];
        // bias, then each weight
        for site in std::iter::once(None).chain(parents.into_iter().map(Some)) {
            let (current, step, column) = match site {
                None => (self.unit(target)?.bias, bias_step, ones.clone()),
                Some(p) => (self.unit(target)?.weights[&p], weight_step, self.unit(p)?.u.clone()),
            };
            let proposed = current + step * normal(rng);
            let delta = proposed - current;
            let log_ratio = Self::shift_log_density(self.unit(target)?, &column, delta)
                + log_normal_density(proposed, 0.0, 1.0)
                - log_normal_density(current, 0.0, 1.0);
            self.stats.param_proposed += 1;
            if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
                self.stats.param_accepted += 1;
                let unit = self.unit_mut(target)?;
                match site {
                    None => unit.bias = proposed,
                    Some(p) => {
                        unit.weights.insert(p, proposed);
                    }
                }
                for (m, x) in unit.mu.iter_mut().zip(&column) {
                    *m += delta * x;
                }
            }
        }
        self.recompute_mean(target);
        let unit = self.unit(target)?;
        let current = unit.precision;
        let proposed = current * (log_precision_step * normal(rng)).exp();
        let ssr = unit.residual_sq();
        let n = self.n as f64;
        let log_ratio = 0.5 * n * (proposed / current).ln() - 0.5 * (proposed - current) * ssr
            + log_precision_prior(proposed)
            - log_precision_prior(current)
            + (proposed / current).ln();
        self.stats.param_proposed += 1;
        if proposed > 0.0 && proposed.is_finite() && (log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio) {
            self.stats.param_accepted += 1;
            self.unit_mut(target)?.precision = proposed;
        }
        Ok(())
    }

    /// One Metropolis pass over each datum's preactivation of a hidden node.
    fn update_activations(&mut self, dag: &OrderedDag, id: NodeId, rng: &mut RngStream) -> Result<()> {
        let step = self.steps.get(&id).copied().unwrap_or(self.config.activation_step);
        let children: Vec<(NodeId, f64)> = dag
            .children(id)
            .iter()
            .map(|c| Ok((*c, self.unit(*c)?.weights[&id])))
            .collect::<Result<_>>()?;
        let mut node = self.units.remove(&id).ok_or(IcpError::UnknownNode(id))?;
        let mut accepted = 0u64;
        for row in 0..self.n {
            let a = node.a[row];
            let proposed = a + step * normal(rng);
            let du = sigmoid(proposed) - node.u[row];
            let (dp, dc) = (proposed - node.mu[row], a - node.mu[row]);
            let mut log_ratio = -0.5 * node.precision * (dp * dp - dc * dc);
            for (c, w) in &children {
                let child = &self.units[c];
                let r = child.a[row] - child.mu[row];
                let s = w * du;
                log_ratio += -0.5 * child.precision * (s * s - 2.0 * s * r);
            }
            if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
                accepted += 1;
                node.a[row] = proposed;
                node.u[row] += du;
                for (c, w) in &children {
                    self.units.get_mut(c).expect("child exists").mu[row] += w * du;
                }
            }
        }
        // resynchronise outputs exactly after incremental updates
        for (u, a) in node.u.iter_mut().zip(&node.a) {
            *u = sigmoid(*a);
        }
        self.units.insert(id, node);
        for (c, _) in &children {
            self.recompute_mean(*c);
        }
        self.stats.activation_proposed += self.n as u64;
        self.stats.activation_accepted += accepted;
        if self.adapting && self.n > 0 {
            let rate = accepted as f64 / self.n as f64;
            let next = (step * (rate - self.config.activation_target).exp()).clamp(1e-3, 50.0);
            self.steps.insert(id, next);
        }
        Ok(())
    }

    fn check_matches(&self, dag: &OrderedDag) -> Result<()> {
        if dag.len() != self.units.len() || dag.nodes().any(|n| !self.units.contains_key(&n.id)) {
            return Err(IcpError::Internal("likelihood state out of step with the graph".into()));
        }
        Ok(())
    }
}

impl LikelihoodHook for NlgbnModel {
    fn log_likelihood(&self, dag: &OrderedDag) -> Result<f64> {
        self.check_matches(dag)?;
        Ok(self.units.values().map(Unit::log_density).sum())
    }

    fn propose(
        &mut self,
        before: &OrderedDag,
        after: &OrderedDag,
        change: &StructureChange,
        rng: &mut RngStream,
    ) -> Result<f64> {
        self.pending = Pending::default();
        match *change {
            StructureChange::Reorder { .. } => Ok(0.0),
            StructureChange::AddEdge { parent, child } => self.link_delta(before, after, parent, child, true, rng),
            StructureChange::RemoveEdge { parent, child } | StructureChange::Death { node: parent, child } => {
                self.link_delta(before, after, parent, child, false, rng)
            }
            StructureChange::Birth { node, child } => {
                let unit = self.draw_orphan(rng)?;
                self.gram.purge(node);
                self.pending.unit = Some((node, unit));
                self.link_delta(before, after, node, child, true, rng)
            }
        }
    }

    fn accept(&mut self, after: &OrderedDag, change: &StructureChange, rng: &mut RngStream) -> Result<()> {
        match *change {
            StructureChange::Reorder { .. } => {}
            StructureChange::AddEdge { parent, child } => self.link(after, parent, child, rng)?,
            StructureChange::RemoveEdge { parent, child } => self.unlink(after, parent, child, rng)?,
            StructureChange::Birth { node, child } => {
                let (id, unit) = self
                    .pending
                    .unit
                    .take()
                    .ok_or_else(|| IcpError::Internal("accepted birth without a proposed unit".into()))?;
                debug_assert_eq!(id, node);
                self.units.insert(id, unit);
                self.steps.insert(id, self.config.activation_step);
                self.link(after, node, child, rng)?;
            }
            StructureChange::Death { node, child } => {
                self.unlink(after, node, child, rng)?;
                self.units.remove(&node);
                self.steps.remove(&node);
                self.gram.purge(node);
            }
        }
        self.pending = Pending::default();
        Ok(())
    }

    fn reject(&mut self, change: &StructureChange) {
        if let StructureChange::Birth { node, .. } = *change {
            // the id is handed out again by the next proposal
            self.gram.purge(node);
        }
        self.pending = Pending::default();
    }

    fn update_auxiliary(&mut self, dag: &OrderedDag, _hp: &Hyperparams, rng: &mut RngStream) -> Result<()> {
        self.check_matches(dag)?;
        for _ in 0..self.config.passes.max(1) {
            self.pass(dag, rng)?;
        }
        Ok(())
    }

    fn set_adapting(&mut self, adapting: bool) {
        self.adapting = adapting;
    }

    fn params_record(&self) -> Option<ParamsRecord> {
        let mut weights = Vec::new();
        for (id, unit) in &self.units {
            for (p, w) in &unit.weights {
                weights.push((p.0, id.0, *w));
            }
        }
        weights.sort_by_key(|(p, c, _)| (*p, *c));
        Some(ParamsRecord {
            weights,
            biases: self.units.iter().map(|(id, u)| (id.0, u.bias)).collect(),
            precisions: self.units.iter().map(|(id, u)| (id.0, u.precision)).collect(),
            rescale: Some(self.rescale.clone()),
        })
    }
}

impl NlgbnModel {
    fn pass(&mut self, dag: &OrderedDag, rng: &mut RngStream) -> Result<()> {
        let ids: Vec<NodeId> = dag.nodes().map(|n| n.id).collect();
        for id in &ids {
            match self.config.params {
                ParamUpdate::Conjugate => self.conjugate_update(*id, dag.parents(*id), rng)?,
                ParamUpdate::RandomWalk {
                    weight_step,
                    bias_step,
                    log_precision_step,
                } => self.random_walk_update(*id, (weight_step, bias_step, log_precision_step), rng)?,
            }
        }
        for id in dag.descending_order() {
            if !self.unit(id)?.observed {
                self.update_activations(dag, id, rng)?;
            }
        }
        self.gram.clear();
        Ok(())
    }
}
