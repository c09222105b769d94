//! Sequential generative sampler for the prior.
//!
//! Observed nodes ("stars") are introduced one at a time. Each new node first
//! offers itself as a parent to lower nodes (stars only), then picks parents
//! among existing higher nodes, then creates brand-new hidden parents in the
//! gaps above it. New hidden nodes are queued and go through the last two
//! steps themselves before the next star arrives.

use std::collections::VecDeque;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution, Poisson};

use crate::error::{IcpError, Result};
use crate::graph::{NodeId, NodeKind, OrderedDag};
use crate::hyperparams::Hyperparams;

/// How many lower nodes a new star becomes a parent of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackwardRule {
    /// Binomial(↓, φ/(α+φ)).
    #[default]
    Binomial,
    /// Beta-binomial(↓, φ, α): the count implied by integrating the star's
    /// Beta(φ, α) popularity, consistent with the later parent-selection step.
    BetaBinomial,
}

/// Where the observed nodes sit.
#[derive(Debug, Clone, PartialEq)]
pub enum StarPlacement {
    Fixed(Vec<f64>),
    /// Draw this many order values from U(0, 1).
    Random(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SamplerOptions {
    pub backward: BackwardRule,
    /// Pin stars at 0 and every new hidden node at 1.
    pub ibp: bool,
}

/// Bernoulli parameter for an existing higher node becoming a parent of the
/// node being processed. `down` includes the processed node itself.
pub fn existing_parent_probability(
    m: usize,
    down: usize,
    is_star: bool,
    hp: &Hyperparams,
) -> Result<f64> {
    let boost = if is_star { hp.phi } else { 0.0 };
    if down == 0 {
        return Err(IcpError::Internal(
            "parent candidate with no lower node".into(),
        ));
    }
    let p = (m as f64 + boost) / (hp.alpha + (down - 1) as f64 + boost);
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(IcpError::Internal(format!(
            "parent probability {p} out of range (m = {m}, down = {down})"
        )))
    }
}

/// Poisson rate of new hidden parents in a gap of length `len`; `down`
/// includes the processed node itself.
pub fn new_parent_rate(len: f64, down: usize, hp: &Hyperparams) -> f64 {
    len * hp.alpha * hp.gamma / (hp.alpha + down.saturating_sub(1) as f64)
}

#[derive(Debug, Clone, Copy)]
struct Chef {
    theta: f64,
    star: bool,
    m: usize,
}

/// State of one generative draw.
#[derive(Debug, Clone)]
pub struct ChefProcess {
    hp: Hyperparams,
    opts: SamplerOptions,
    dag: OrderedDag,
    // indexed by node id
    chefs: Vec<Chef>,
    // ascending order values of nodes whose parent choices are final
    processed: Vec<f64>,
    // every node as (theta, id), ascending
    by_theta: Vec<(f64, NodeId)>,
}

fn insert_sorted_f64(list: &mut Vec<f64>, x: f64) {
    let pos = list.partition_point(|t| *t <= x);
    list.insert(pos, x);
}

impl ChefProcess {
    pub fn new(hp: Hyperparams, opts: SamplerOptions) -> Result<Self> {
        hp.validate()?;
        Ok(ChefProcess {
            hp,
            opts,
            dag: OrderedDag::new(),
            chefs: Vec::new(),
            processed: Vec::new(),
            by_theta: Vec::new(),
        })
    }

    pub fn dag(&self) -> &OrderedDag {
        &self.dag
    }

    pub fn into_dag(self) -> OrderedDag {
        self.dag
    }

    fn add_chef(&mut self, theta: f64, star: bool) -> Result<NodeId> {
        let kind = if star {
            NodeKind::Observed
        } else {
            NodeKind::Hidden
        };
        let id = self.dag.add_node(theta, kind)?;
        debug_assert_eq!(id.0 as usize, self.chefs.len());
        self.chefs.push(Chef { theta, star, m: 0 });
        let pos = self.by_theta.partition_point(|(t, _)| *t <= theta);
        self.by_theta.insert(pos, (theta, id));
        Ok(id)
    }

    fn link(&mut self, parent: NodeId, child: NodeId) -> Result<()> {
        self.dag.add_edge(parent, child)?;
        self.chefs[parent.0 as usize].m += 1;
        Ok(())
    }

    /// Processed nodes strictly below `theta`.
    fn processed_below(&self, theta: f64) -> usize {
        self.processed.partition_point(|t| *t < theta)
    }

    fn processed_at_or_below(&self, theta: f64) -> usize {
        self.processed.partition_point(|t| *t <= theta)
    }

    /// Introduces a star, runs all three steps for it and then processes the
    /// hidden nodes it spawned.
    pub fn introduce_star<R: Rng + ?Sized>(&mut self, theta: f64, rng: &mut R) -> Result<NodeId> {
        let theta = if self.opts.ibp { 0.0 } else { theta };
        let star = self.add_chef(theta, true)?;
        self.backward_proposal(star, rng)?;
        let mut queue = VecDeque::from([star]);
        while let Some(chef) = queue.pop_front() {
            self.select_existing(chef, rng)?;
            queue.extend(self.select_new(chef, rng)?);
            insert_sorted_f64(&mut self.processed, self.chefs[chef.0 as usize].theta);
        }
        Ok(star)
    }

    /// Step one: the star becomes a parent of a uniformly chosen subset of the
    /// lower processed nodes, the subset size drawn by the backward rule.
    pub fn backward_proposal<R: Rng + ?Sized>(
        &mut self,
        star: NodeId,
        rng: &mut R,
    ) -> Result<Vec<NodeId>> {
        let theta = self.chefs[star.0 as usize].theta;
        let lower: Vec<NodeId> = self
            .by_theta
            .iter()
            .take_while(|(t, _)| *t < theta)
            .map(|(_, id)| *id)
            .collect();
        let down = lower.len();
        if down == 0 || self.hp.phi == 0.0 {
            return Ok(Vec::new());
        }
        let p = match self.opts.backward {
            BackwardRule::Binomial => self.hp.phi / (self.hp.alpha + self.hp.phi),
            BackwardRule::BetaBinomial => Beta::new(self.hp.phi, self.hp.alpha)
                .map_err(|e| IcpError::Internal(e.to_string()))?
                .sample(rng),
        };
        let q = Binomial::new(down as u64, p)
            .map_err(|e| IcpError::Internal(e.to_string()))?
            .sample(rng) as usize;
        let mut chosen: Vec<NodeId> = sample_indices(rng, down, q)
            .iter()
            .map(|j| lower[j])
            .collect();
        chosen.sort();
        for &child in &chosen {
            self.link(star, child)?;
        }
        Ok(chosen)
    }

    /// Step two: every existing higher node becomes a parent independently.
    pub fn select_existing<R: Rng + ?Sized>(
        &mut self,
        chef: NodeId,
        rng: &mut R,
    ) -> Result<Vec<NodeId>> {
        let theta = self.chefs[chef.0 as usize].theta;
        let start = self.by_theta.partition_point(|(t, _)| *t <= theta);
        let mut chosen = Vec::new();
        for idx in start..self.by_theta.len() {
            let (tk, k) = self.by_theta[idx];
            let cand = self.chefs[k.0 as usize];
            let down = self.processed_below(tk) + 1;
            let p = existing_parent_probability(cand.m, down, cand.star, &self.hp)?;
            if rng.random_bool(p) {
                chosen.push(k);
            }
        }
        for &k in &chosen {
            self.link(k, chef)?;
        }
        Ok(chosen)
    }

    /// Step three: Poisson numbers of new hidden parents in the gaps above the
    /// processed node. Returns the new nodes in processing order.
    pub fn select_new<R: Rng + ?Sized>(
        &mut self,
        chef: NodeId,
        rng: &mut R,
    ) -> Result<Vec<NodeId>> {
        let theta = self.chefs[chef.0 as usize].theta;
        // The rate only changes at processed order values, so the gaps between
        // consecutive processed values above the chef can be drawn as one.
        let start = self.processed_at_or_below(theta);
        let mut bounds = Vec::with_capacity(self.processed.len() - start + 2);
        bounds.push(theta);
        bounds.extend(
            self.processed[start..]
                .iter()
                .copied()
                .filter(|t| *t > theta),
        );
        bounds.push(1.0);
        let mut fresh: Vec<f64> = Vec::new();
        for w in bounds.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if !(hi > lo) {
                continue;
            }
            let rate = new_parent_rate(hi - lo, self.processed_at_or_below(lo) + 1, &self.hp);
            if !(rate > 0.0) {
                continue;
            }
            let count = Poisson::new(rate)
                .map_err(|e| IcpError::Internal(e.to_string()))?
                .sample(rng) as usize;
            for _ in 0..count {
                let t = if self.opts.ibp {
                    1.0
                } else {
                    loop {
                        let t = rng.random_range(lo..hi);
                        if t > lo {
                            break t;
                        }
                    }
                };
                fresh.push(t);
            }
        }
        fresh.sort_by(|a, b| b.total_cmp(a));
        let mut ids = Vec::with_capacity(fresh.len());
        for t in fresh {
            let k = self.add_chef(t, false)?;
            self.link(k, chef)?;
            ids.push(k);
        }
        Ok(ids)
    }
}

/// One draw from the prior with the given observed-node placement.
pub fn sample_prior<R: Rng + ?Sized>(
    hp: &Hyperparams,
    stars: &StarPlacement,
    opts: SamplerOptions,
    rng: &mut R,
) -> Result<OrderedDag> {
    let thetas: Vec<f64> = match stars {
        StarPlacement::Fixed(t) => t.clone(),
        StarPlacement::Random(n) => (0..*n).map(|_| rng.random::<f64>()).collect(),
    };
    if thetas.is_empty() {
        return Err(IcpError::InvalidArgument(
            "at least one observed node is required".into(),
        ));
    }
    if let Some(t) = thetas.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(IcpError::Domain(format!(
            "star order value {t} outside [0, 1]"
        )));
    }
    let mut process = ChefProcess::new(*hp, opts)?;
    for t in thetas {
        process.introduce_star(t, rng)?;
    }
    Ok(process.into_dag())
}
