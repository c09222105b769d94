//! Exact log-density of the active structure and active order values, in the
//! finite-K form and in the infinite limit.

use std::collections::BTreeMap;

use crate::error::{IcpError, Result};
use crate::graph::{
    count_stats, ActiveNode, CountStats, NodeId, NodeKind, OrderedDag, SortedOrders,
};
use crate::hyperparams::Hyperparams;
use crate::special::{
    harmonic_shift, log_factorial, log_falling_factorial, log_rising_factorial, CompensatedSum,
};

/// Natural-log probability density.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogDensity(pub f64);

impl LogDensity {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

/// `αγ Σ_{j=1}^{K⁺} len_j (ψ(α+j) − ψ(α))`, the mass of inactive nodes that
/// would have connected to an active node below them.
fn interval_penalty(orders: &SortedOrders, hp: &Hyperparams) -> Result<f64> {
    let k_plus = orders.interval_count() - 1;
    let mut harmonic = CompensatedSum::default();
    let mut total = CompensatedSum::default();
    for j in 1..=k_plus {
        let h = if j <= 10_000 {
            harmonic.add(1.0 / (hp.alpha + (j - 1) as f64));
            harmonic.value()
        } else {
            harmonic_shift(hp.alpha, j)?
        };
        total.add(orders.interval_length(j) * h);
    }
    Ok(hp.alpha * hp.gamma * total.value())
}

/// Per-node factor of the infinite-limit density.
pub fn node_term(kind: NodeKind, m: usize, down: usize, hp: &Hyperparams) -> Result<f64> {
    match kind {
        NodeKind::Hidden => {
            if m == 0 {
                return Err(IcpError::Internal(
                    "hidden node term requested with zero out-degree".into(),
                ));
            }
            Ok((hp.alpha * hp.gamma).ln() + log_factorial(m - 1)
                - log_rising_factorial(hp.alpha + (down - m) as f64, m)?)
        }
        NodeKind::Observed => {
            let boost = if m == 0 {
                0.0
            } else if hp.phi == 0.0 {
                return Ok(f64::NEG_INFINITY);
            } else {
                log_rising_factorial(hp.phi, m)?
            };
            Ok(boost + log_rising_factorial(hp.alpha, down - m)?
                - log_rising_factorial(hp.alpha + hp.phi, down)?)
        }
    }
}

fn check_hidden_degrees(stats: &CountStats) -> Result<()> {
    match stats
        .nodes
        .iter()
        .find(|n| n.kind == NodeKind::Hidden && n.m == 0)
    {
        Some(n) => Err(IcpError::ZeroOutDegree(n.id)),
        None => Ok(()),
    }
}

/// Infinite-limit log-density from precomputed statistics.
pub fn log_prob_from_stats(stats: &CountStats, hp: &Hyperparams) -> Result<LogDensity> {
    hp.validate()?;
    check_hidden_degrees(stats)?;
    let orders = SortedOrders::from_stats(stats);
    // summed in value order so that relabelling tied nodes cannot change the bits
    let mut terms = stats
        .nodes
        .iter()
        .map(|n| node_term(n.kind, n.m, n.down, hp))
        .collect::<Result<Vec<f64>>>()?;
    terms.sort_by(f64::total_cmp);
    let total =
        -log_factorial(stats.k_plus) - interval_penalty(&orders, hp)? + terms.iter().sum::<f64>();
    Ok(LogDensity(total))
}

/// Log-density of the active subgraph and its order values in the infinite
/// limit. Inactive nodes of `dag` are ignored.
pub fn log_prob_infinite(dag: &OrderedDag, hp: &Hyperparams) -> Result<LogDensity> {
    log_prob_from_stats(&count_stats(dag)?, hp)
}

/// Log-density under the finite model with `k_total` nodes in total.
pub fn log_prob_finite(dag: &OrderedDag, hp: &Hyperparams, k_total: u64) -> Result<LogDensity> {
    hp.validate()?;
    let stats = count_stats(dag)?;
    let k = k_total as f64;
    if (k_total as usize) < stats.k_plus {
        return Err(IcpError::InvalidArgument(format!(
            "k_total = {k_total} is below the {} active nodes",
            stats.k_plus
        )));
    }
    if !(hp.gamma < k) {
        return Err(IcpError::InvalidHyperparams(format!(
            "finite form needs gamma < K, got gamma = {} and K = {k_total}",
            hp.gamma
        )));
    }
    let c = hp.alpha * hp.gamma / k;
    let rest = hp.alpha - c;

    let mut total = log_falling_factorial(k - stats.d as f64, stats.k_plus - stats.d)?
        - log_factorial(stats.k_plus);

    // Probability that an inactive node, placed uniformly, has no edge into
    // the active set is Σ_j len_j r_j = 1 − Σ_j len_j (1 − r_j).
    let orders = SortedOrders::from_stats(&stats);
    let mut log_r = 0.0;
    let mut miss = CompensatedSum::default();
    for j in 1..orders.interval_count() {
        log_r += (-c / (hp.alpha + (j - 1) as f64)).ln_1p();
        miss.add(orders.interval_length(j) * -log_r.exp_m1());
    }
    let k_minus = (k_total as usize - stats.k_plus) as f64;
    if k_minus > 0.0 {
        total += k_minus * (-miss.value()).ln_1p();
    }

    for n in &stats.nodes {
        let boost = match n.kind {
            NodeKind::Hidden => 0.0,
            NodeKind::Observed => hp.phi,
        };
        total += log_rising_factorial(c + boost, n.m)? + log_rising_factorial(rest, n.down - n.m)?
            - log_rising_factorial(hp.alpha + boost, n.down)?;
    }
    Ok(LogDensity(total))
}

/// `log p(a) − log p(b)`, skipping node factors whose statistics agree in
/// both states.
pub fn log_prob_ratio(a: &OrderedDag, b: &OrderedDag, hp: &Hyperparams) -> Result<f64> {
    hp.validate()?;
    let (sa, sb) = (count_stats(a)?, count_stats(b)?);
    check_hidden_degrees(&sa)?;
    check_hidden_degrees(&sb)?;
    stats_ratio(&sa, &sb, hp)
}

/// Same as [`log_prob_ratio`] on precomputed statistics.
pub fn stats_ratio(sa: &CountStats, sb: &CountStats, hp: &Hyperparams) -> Result<f64> {
    let key = |n: &ActiveNode| (n.kind, n.m, n.down);
    let b_terms: BTreeMap<NodeId, (NodeKind, usize, usize)> =
        sb.nodes.iter().map(|n| (n.id, key(n))).collect();
    let mut shared: BTreeMap<NodeId, bool> = BTreeMap::new();

    let mut diff = log_factorial(sb.k_plus) - log_factorial(sa.k_plus);
    let oa = SortedOrders::from_stats(sa);
    let ob = SortedOrders::from_stats(sb);
    if oa != ob {
        diff += interval_penalty(&ob, hp)? - interval_penalty(&oa, hp)?;
    }
    for n in &sa.nodes {
        if b_terms.get(&n.id) == Some(&key(n)) {
            shared.insert(n.id, true);
            continue;
        }
        diff += node_term(n.kind, n.m, n.down, hp)?;
    }
    for n in &sb.nodes {
        if shared.contains_key(&n.id) {
            continue;
        }
        diff -= node_term(n.kind, n.m, n.down, hp)?;
    }
    if diff.is_nan() {
        // both states have zero density
        return Err(IcpError::ZeroProbability);
    }
    Ok(diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::random_active_dag;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single(theta: f64) -> OrderedDag {
        let mut dag = OrderedDag::new();
        dag.add_node(theta, NodeKind::Observed).unwrap();
        dag
    }

    fn hp(a: f64, g: f64, p: f64) -> Hyperparams {
        Hyperparams::new(a, g, p).unwrap()
    }

    #[test]
    fn single_observed_closed_form() {
        for &g in &[0.1, 1.0, 10.0] {
            for &t in &[0.0, 0.3, 1.0] {
                let lp = log_prob_infinite(&single(t), &hp(1.3, g, 0.7)).unwrap();
                assert!((lp.value() + g * (1.0 - t)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_observed_finite_with_no_inactive_nodes() {
        let lp = log_prob_finite(&single(0.4), &hp(1.0, 0.5, 1.0), 1).unwrap();
        assert_eq!(lp.value(), 0.0);
    }

    #[test]
    fn observed_parent_needs_boost() {
        let mut dag = OrderedDag::new();
        let a = dag.add_node(0.9, NodeKind::Observed).unwrap();
        let b = dag.add_node(0.1, NodeKind::Observed).unwrap();
        dag.add_edge(a, b).unwrap();
        let lp = log_prob_infinite(&dag, &hp(1.0, 1.0, 0.0)).unwrap();
        assert_eq!(lp.value(), f64::NEG_INFINITY);
        assert!(log_prob_infinite(&dag, &hp(1.0, 1.0, 0.5))
            .unwrap()
            .is_finite());
    }

    #[test]
    fn childless_hidden_node_is_an_error() {
        let mut dag = single(0.0);
        let h = dag.add_node(0.5, NodeKind::Hidden).unwrap();
        let stats = count_stats(&dag).unwrap();
        assert!(stats.get(h).is_none());
        let mut forced = stats.clone();
        forced.nodes.push(ActiveNode {
            id: h,
            theta: 0.5,
            kind: NodeKind::Hidden,
            m: 0,
            down: 1,
            up: 0,
        });
        assert!(matches!(
            log_prob_from_stats(&forced, &hp(1.0, 1.0, 1.0)),
            Err(IcpError::ZeroOutDegree(_))
        ));
    }

    #[test]
    fn hidden_parent_by_hand() {
        // observed at 0, hidden parent at t
        let (a, g, t) = (1.5, 2.0, 0.6);
        let mut dag = single(0.0);
        let o = dag.nodes().next().unwrap().id;
        let h = dag.add_node(t, NodeKind::Hidden).unwrap();
        dag.add_edge(h, o).unwrap();
        let want = -(2f64).ln()
            - a * g * ((t - 0.0) * (1.0 / a) + (1.0 - t) * (1.0 / a + 1.0 / (a + 1.0)))
            + (a * g).ln()
            - a.ln();
        let got = log_prob_infinite(&dag, &hp(a, g, 0.3)).unwrap().value();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn normalization_over_single_order_value() {
        // ∫ e^{−γ(1−θ)} dθ = (1 − e^{−γ})/γ by Simpson's rule
        let g = 2.5;
        let h = hp(1.0, g, 1.0);
        let n = 2000;
        let f = |t: f64| log_prob_infinite(&single(t), &h).unwrap().value().exp();
        let step = 1.0 / n as f64;
        let mut s = f(0.0) + f(1.0);
        for i in 1..n {
            s += f(i as f64 * step) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let integral = s * step / 3.0;
        assert!((integral - (1.0 - (-g).exp()) / g).abs() < 1e-10);
    }

    #[test]
    fn finite_form_rejects_bad_arguments() {
        let dag = single(0.2);
        assert!(log_prob_finite(&dag, &hp(1.0, 5.0, 1.0), 5).is_err());
        assert!(log_prob_finite(&dag, &hp(1.0, 5.0, 1.0), 6).is_ok());
        let mut two = single(0.2);
        two.add_node(0.5, NodeKind::Observed).unwrap();
        assert!(log_prob_finite(&two, &hp(1.0, 0.5, 1.0), 1).is_err());
    }

    fn finite_graph(rng: &mut ChaCha8Rng, phi_zero: bool) -> OrderedDag {
        loop {
            let dag = random_active_dag(rng, 6, 0.5);
            let obs_parent = dag.observed().any(|n| !dag.children(n.id).is_empty());
            if !(phi_zero && obs_parent) {
                return dag;
            }
        }
    }

    #[test]
    fn finite_form_converges_to_infinite_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for case in 0..100 {
            let h = hp(
                [0.5, 1.0, 2.0][case % 3],
                [0.5, 1.0, 5.0][(case / 3) % 3],
                [0.0, 1.0, 5.0][(case / 9) % 3],
            );
            let dag = finite_graph(&mut rng, h.phi == 0.0);
            let inf = log_prob_infinite(&dag, &h).unwrap().value();
            let errs: Vec<f64> = [100u64, 1000, 10_000, 1_000_000]
                .iter()
                .map(|k| (log_prob_finite(&dag, &h, *k).unwrap().value() - inf).abs())
                .collect();
            for w in errs.windows(2) {
                assert!(w[1] < w[0], "case {case}: {errs:?}");
            }
            assert!(errs[3] < 1e-3);
        }
    }

    #[test]
    fn ratio_matches_full_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = hp(1.3, 2.0, 0.8);
        for _ in 0..300 {
            let a = random_active_dag(&mut rng, 6, 0.4);
            let mut b = a.clone();
            let ids: Vec<NodeId> = b.nodes().map(|n| n.id).collect();
            let p = ids[rng.random_range(0..ids.len())];
            let c = ids[rng.random_range(0..ids.len())];
            if b.has_edge(p, c) {
                b.remove_edge(p, c).unwrap();
            } else if b.add_edge(p, c).is_err() {
                continue;
            }
            b.prune_inactive();
            let full = log_prob_infinite(&a, &h).unwrap().value()
                - log_prob_infinite(&b, &h).unwrap().value();
            let r = log_prob_ratio(&a, &b, &h).unwrap();
            assert!((full - r).abs() < 1e-9, "{full} vs {r}");
        }
    }

    #[test]
    fn ratio_with_new_singleton_parent() {
        let h = hp(0.7, 3.0, 1.0);
        let mut b = single(0.0);
        let o = b.nodes().next().unwrap().id;
        let x = b.add_node(0.4, NodeKind::Observed).unwrap();
        let mut a = b.clone();
        let k = a.add_node(0.8, NodeKind::Hidden).unwrap();
        a.add_edge(k, x).unwrap();
        a.add_edge(k, o).unwrap();
        let full =
            log_prob_infinite(&a, &h).unwrap().value() - log_prob_infinite(&b, &h).unwrap().value();
        assert!((log_prob_ratio(&a, &b, &h).unwrap() - full).abs() < 1e-12);
        assert_eq!(log_prob_ratio(&a, &a, &h).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn label_permutation_is_bit_identical(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dag = random_active_dag(&mut rng, 6, 0.5);
            let mut nodes: Vec<_> = dag.nodes().copied().collect();
            let mut new_ids: Vec<u64> = (100..100 + nodes.len() as u64).collect();
            for i in (1..new_ids.len()).rev() {
                new_ids.swap(i, rng.random_range(0..=i));
            }
            let map: BTreeMap<NodeId, NodeId> = nodes
                .iter()
                .zip(&new_ids)
                .map(|(n, id)| (n.id, NodeId(*id)))
                .collect();
            let mut relabelled = OrderedDag::new();
            for n in nodes.iter_mut() {
                n.id = map[&n.id];
                relabelled.insert_node(*n).unwrap();
            }
            for (p, c) in dag.edges() {
                relabelled.add_edge(map[&p], map[&c]).unwrap();
            }
            let h = hp(1.1, 2.0, 0.9);
            prop_assert_eq!(
                log_prob_infinite(&dag, &h).unwrap().value().to_bits(),
                log_prob_infinite(&relabelled, &h).unwrap().value().to_bits()
            );
            prop_assert_eq!(
                log_prob_finite(&dag, &h, 1000).unwrap().value().to_bits(),
                log_prob_finite(&relabelled, &h, 1000).unwrap().value().to_bits()
            );
        }
    }
}
