//! Acceptance criteria, one PASS/FAIL line each.
//!
//! `cargo test --test acceptance -- 3 7` runs a subset. Failures are reported
//! but only change the exit status when `ICP_ACCEPTANCE_STRICT` is set.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use icp_core::chain::ChainSample;
use icp_core::convnet::{compute_channels, compute_pixels};
use icp_core::distribution::{log_prob_finite, log_prob_infinite, log_prob_ratio};
use icp_core::evaluation::{hellinger, hyper_study, make_synthetic, HellingerMethod, StudyRow, SyntheticKind};
use icp_core::graph::random_active_dag;
use icp_core::mcmc::{
    birth_intervals, birth_proposal, death_proposal, gibbs_candidates, gibbs_edge_probability, run_chain,
    NoLikelihood, Schedule, StructureChange, SweepSize, TargetSpec,
};
use icp_core::nlgbn::{fantasy, initial_dag, log_density_unit, sigmoid, NlgbnConfig, NlgbnModel};
use icp_core::prior::{sample_prior, SamplerOptions, StarPlacement};
use icp_core::{count_stats, Hyperparams, NodeId, NodeKind, OrderedDag, RngStream};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

struct Criterion {
    number: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn hp(a: f64, g: f64, p: f64) -> Hyperparams {
    Hyperparams::new(a, g, p).unwrap()
}

fn gibbs_odds() -> Outcome {
    let mut rng = RngStream::new(1);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut zero_mass = 0;
    for h in [hp(1.0, 1.0, 1.0), hp(2.0, 3.0, 5.0), hp(0.5, 5.0, 0.0)] {
        for _ in 0..200 {
            let dag = random_active_dag(&mut rng, 6, 0.4);
            let stats = count_stats(&dag).unwrap();
            for child in dag.nodes().map(|n| n.id).collect::<Vec<_>>() {
                for parent in gibbs_candidates(&dag, child) {
                    let (mut with, mut without) = (dag.clone(), dag.clone());
                    if dag.has_edge(parent, child) {
                        without.remove_edge(parent, child).unwrap();
                    } else {
                        with.add_edge(parent, child).unwrap();
                    }
                    let node = stats.get(parent).unwrap();
                    let p = gibbs_edge_probability(node.kind, without.children(parent).len(), node.down, &h);
                    let lw = log_prob_infinite(&with, &h).unwrap().value();
                    let lo = log_prob_infinite(&without, &h).unwrap().value();
                    if lw == f64::NEG_INFINITY && lo == f64::NEG_INFINITY {
                        // φ = 0 with an observed node already feeding another
                        continue;
                    }
                    if p == 0.0 || p == 1.0 || lw == f64::NEG_INFINITY || lo == f64::NEG_INFINITY {
                        let agrees = (p == 0.0 && lw == f64::NEG_INFINITY) || (p == 1.0 && lo == f64::NEG_INFINITY);
                        if !agrees {
                            return Outcome::new(false, format!("odds {p} against log densities {lw}, {lo}"));
                        }
                        zero_mass += 1;
                        continue;
                    }
                    let ratio = log_prob_ratio(&with, &without, &h).unwrap();
                    let rel = (p / (1.0 - p) / ratio.exp() - 1.0).abs();
                    worst = worst.max(rel);
                    checked += 1;
                }
            }
        }
    }
    Outcome::new(
        worst < 1e-9,
        format!("{checked} edge updates over 600 graphs, max relative error {worst:.2e}; {zero_mass} zero-mass cases agree"),
    )
}

fn birth_death_pairing() -> Outcome {
    let mut rng = RngStream::new(2);
    let h = hp(1.3, 2.0, 0.7);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 500 {
        let dag = random_active_dag(&mut rng, 6, 0.5);
        let ids: Vec<NodeId> = dag.nodes().map(|n| n.id).collect();
        let child = ids[rng.random_range(0..ids.len())];
        let intervals = birth_intervals(&dag, child).unwrap();
        let (lo, hi) = intervals[rng.random_range(0..intervals.len())];
        let theta = lo + (hi - lo) * rng.random_range(0.01..0.99);
        let lp = log_prob_infinite(&dag, &h).unwrap().value();
        let Some(birth) = birth_proposal(&dag, lp, &h, child, theta).unwrap() else {
            continue;
        };
        let StructureChange::Birth { node, .. } = birth.change else {
            return Outcome::new(false, "birth proposal reported another change");
        };
        let death = death_proposal(&birth.dag, birth.log_prior, &h, child, node).unwrap();
        worst = worst.max((birth.log_ratio + death.log_ratio).abs());
        checked += 1;
    }
    Outcome::new(worst < 1e-9, format!("500 pairs, max |log product| {worst:.2e}"))
}

fn finite_convergence() -> Outcome {
    let mut rng = RngStream::new(3);
    let sizes = [100u64, 1_000, 10_000, 1_000_000];
    let settings = [hp(1.0, 1.0, 1.0), hp(2.0, 3.0, 0.5), hp(0.7, 0.5, 2.0)];
    let mut mean_err = [0.0; 4];
    let mut worst_top: f64 = 0.0;
    let graphs = 100;
    for g in 0..graphs {
        let h = settings[g % settings.len()];
        let dag = random_active_dag(&mut rng, 6, 0.4);
        let exact = log_prob_infinite(&dag, &h).unwrap().value();
        for (i, k) in sizes.iter().enumerate() {
            let err = (log_prob_finite(&dag, &h, *k).unwrap().value() - exact).abs();
            mean_err[i] += err / graphs as f64;
            if i == sizes.len() - 1 {
                worst_top = worst_top.max(err);
            }
        }
    }
    let decreasing = mean_err.windows(2).all(|w| w[1] < w[0]);
    Outcome::new(
        worst_top < 1e-3 && decreasing,
        format!(
            "mean error at K = 1e2, 1e3, 1e4, 1e6: {}; max at 1e6 {worst_top:.2e}",
            mean_err.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn closed_form() -> Outcome {
    let mut worst: f64 = 0.0;
    for gamma in [0.1, 1.0, 10.0] {
        for theta in [0.0, 0.3, 1.0] {
            let mut dag = OrderedDag::new();
            dag.add_node(theta, NodeKind::Observed).unwrap();
            let lp = log_prob_infinite(&dag, &hp(1.0, gamma, 1.0)).unwrap().value();
            worst = worst.max((lp + gamma * (1.0 - theta)).abs());
        }
    }
    Outcome::new(worst < 1e-12, format!("9 cases, max error {worst:.2e}"))
}

struct Moments {
    mean: f64,
    mean_se: f64,
    var: f64,
    var_se: f64,
}

/// Mean and variance with batch-means standard errors.
fn moments(xs: &[f64]) -> Moments {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = sq.iter().sum::<f64>() / n;
    let batches = 50;
    let size = xs.len() / batches;
    let batch_se = |v: &[f64], centre: f64| {
        let means: Vec<f64> = v.chunks(size).take(batches).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        let s2 = means.iter().map(|m| (m - centre).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
        (s2 / batches as f64).sqrt()
    };
    Moments { mean, mean_se: batch_se(xs, mean), var, var_se: batch_se(&sq, var) }
}

/// Largest discrepancy in combined standard errors over mean and variance.
fn z_scores(a: &Moments, b: &Moments) -> f64 {
    let zm = (a.mean - b.mean).abs() / (a.mean_se.powi(2) + b.mean_se.powi(2)).sqrt();
    let zv = (a.var - b.var).abs() / (a.var_se.powi(2) + b.var_se.powi(2)).sqrt();
    zm.max(zv)
}

fn k_and_e(dag: &OrderedDag) -> (f64, f64) {
    let s = count_stats(dag).unwrap();
    (s.k_plus as f64, s.e_plus() as f64)
}

fn stationarity() -> Outcome {
    let n = 100_000;
    let thin = 5;
    let burn_in = 2_000;
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for (i, h) in [hp(1.0, 1.0, 1.0), hp(2.0, 2.0, 0.5), hp(0.7, 1.5, 3.0)].into_iter().enumerate() {
        let mut rng = RngStream::new(50 + i as u64);
        let stars = StarPlacement::Fixed(vec![0.0]);
        let (k_iid, e_iid): (Vec<f64>, Vec<f64>) = (0..n)
            .map(|_| k_and_e(&sample_prior(&h, &stars, SamplerOptions::default(), &mut rng).unwrap()))
            .unzip();
        let schedule = Schedule {
            sweep: SweepSize::Fixed { gibbs: 2, birth_death: 4, order: 2 },
            burn_in,
            thin,
            ..Schedule::default()
        };
        let mut out: Vec<ChainSample> = Vec::new();
        run_chain(
            &TargetSpec::new(h),
            initial_dag(1).unwrap(),
            &schedule,
            burn_in + thin * n as u64,
            &mut rng.substream(1),
            &mut out,
            &mut NoLikelihood,
        )
        .unwrap();
        let (k_mc, e_mc): (Vec<f64>, Vec<f64>) = out.iter().map(|s| k_and_e(&s.dag().unwrap())).unzip();
        let (mk, ck) = (moments(&k_iid), moments(&k_mc));
        let (me, ce) = (moments(&e_iid), moments(&e_mc));
        let z = z_scores(&mk, &ck).max(z_scores(&me, &ce));
        worst = worst.max(z);
        lines.push(format!(
            "({},{},{}) K+ {:.3}/{:.3} E+ {:.3}/{:.3} max z {z:.2}",
            h.alpha, h.gamma, h.phi, mk.mean, ck.mean, me.mean, ce.mean
        ));
    }
    Outcome::new(worst < 4.0, lines.join("; "))
}

const BINS: usize = 4;

fn class_of(dag: &OrderedDag, star: f64) -> usize {
    let stats = count_stats(dag).unwrap();
    match stats.k_plus {
        1 => 0,
        2 => {
            let h = stats.nodes.iter().find(|n| n.kind == NodeKind::Hidden).unwrap();
            let frac = (h.theta - star) / (1.0 - star);
            1 + ((frac * BINS as f64) as usize).min(BINS - 1)
        }
        _ => BINS + 1,
    }
}

/// Class probabilities: the lone star, then one hidden parent by order-value
/// bin (weighted by 2! for the two labellings), then the remainder.
fn class_probabilities(star: f64, h: &Hyperparams) -> Vec<f64> {
    let density = |hidden: Option<f64>| {
        let mut dag = OrderedDag::new();
        let s = dag.add_node(star, NodeKind::Observed).unwrap();
        if let Some(t) = hidden {
            let p = dag.add_node(t, NodeKind::Hidden).unwrap();
            dag.add_edge(p, s).unwrap();
        }
        log_prob_infinite(&dag, h).unwrap().value().exp()
    };
    let mut probs = vec![density(None)];
    let width = (1.0 - star) / BINS as f64;
    let steps = 4000;
    for b in 0..BINS {
        let lo = star + b as f64 * width;
        let step = width / steps as f64;
        let mass: f64 = (0..steps).map(|i| 2.0 * density(Some(lo + (i as f64 + 0.5) * step))).sum::<f64>() * step;
        probs.push(mass);
    }
    probs.push(1.0 - probs.iter().sum::<f64>());
    probs
}

fn sampler_exactness() -> Outcome {
    let draws = 1_000_000;
    let mut worst: f64 = 0.0;
    for (i, (h, star)) in [(hp(1.0, 1.0, 1.0), 0.0), (hp(2.0, 0.7, 0.5), 0.3), (hp(0.5, 1.5, 2.0), 0.0)]
        .into_iter()
        .enumerate()
    {
        let mut rng = RngStream::new(60 + i as u64);
        let placement = StarPlacement::Fixed(vec![star]);
        let mut counts = [0u64; BINS + 2];
        for _ in 0..draws {
            counts[class_of(&sample_prior(&h, &placement, SamplerOptions::default(), &mut rng).unwrap(), star)] += 1;
        }
        for (c, p) in counts.iter().zip(class_probabilities(star, &h)) {
            let freq = *c as f64 / draws as f64;
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            worst = worst.max((freq - p).abs() / se);
        }
    }
    Outcome::new(worst < 4.0, format!("3 settings x 10^6 draws x {} classes, max |z| {worst:.2}", BINS + 2))
}

fn unit_normalization() -> Outcome {
    let mut worst: f64 = 0.0;
    for (mean, precision) in [(0.0, 1.0), (2.0, 0.5), (-1.0, 4.0)] {
        // integrate over u = σ(a): du = σ(a)(1 − σ(a)) da
        let half = 14.0 / f64::sqrt(precision);
        let (lo, hi) = (mean - half, mean + half);
        let steps = 200_000;
        let h = (hi - lo) / steps as f64;
        let total: f64 = (0..steps)
            .map(|i| {
                let a = lo + (i as f64 + 0.5) * h;
                let u = sigmoid(a);
                log_density_unit(u, mean, precision).unwrap().exp() * u * (1.0 - u)
            })
            .sum::<f64>()
            * h;
        worst = worst.max((total - 1.0).abs());
    }
    Outcome::new(worst < 1e-6, format!("3 parameter points, max |integral − 1| {worst:.2e}"))
}

/// Sweeps, burn-in and thinning of the density-estimation runs.
const FIT_SWEEPS: u64 = 50_000;
const FIT_BURN_IN: u64 = 25_000;
const FIT_THIN: u64 = 25;
const FIT_PASSES: usize = 5;

struct FitScore {
    baseline: f64,
    score: f64,
    hidden: f64,
    minutes: f64,
}

fn fit_and_score(kind: SyntheticKind, seed: u64) -> FitScore {
    let start = Instant::now();
    let mut rng = RngStream::new(seed);
    let noise = kind.default_noise();
    let train = make_synthetic(kind, 2000, noise, &mut rng).unwrap();
    let test = make_synthetic(kind, 2000, noise, &mut rng).unwrap();
    let method = HellingerMethod::default_for(2);
    let baseline = hellinger(&train, &test, method).unwrap().value;
    let dag = initial_dag(2).unwrap();
    let config = NlgbnConfig { passes: FIT_PASSES, ..NlgbnConfig::default() };
    let mut model = NlgbnModel::new(&dag, &train, config, &mut rng).unwrap();
    let mut target = TargetSpec::new(hp(1.0, 1.0, 1.0));
    target.infer_hypers = true;
    let schedule = Schedule { burn_in: FIT_BURN_IN, thin: FIT_THIN, ..Schedule::default() };
    let mut samples: Vec<ChainSample> = Vec::new();
    run_chain(&target, dag, &schedule, FIT_SWEEPS, &mut rng, &mut samples, &mut model).unwrap();
    let hidden = samples.iter().map(|s| (s.graph.nodes.len() - 2) as f64).sum::<f64>() / samples.len() as f64;
    let points = fantasy(&samples, 2000, &mut rng).unwrap();
    let score = hellinger(&points, &test, method).unwrap().value;
    FitScore { baseline, score, hidden, minutes: start.elapsed().as_secs_f64() / 60.0 }
}

fn density_estimation() -> Outcome {
    // (dataset, published score) ; band is [our baseline − 0.01, published + 0.03]
    let cases = [(SyntheticKind::Ring, 0.0402), (SyntheticKind::TwoMoons, 0.0342)];
    let results: Vec<FitScore> = std::thread::scope(|s| {
        let handles: Vec<_> = cases
            .iter()
            .enumerate()
            .map(|(i, (kind, _))| s.spawn(move || fit_and_score(*kind, 80 + i as u64)))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut pass = true;
    let mut lines = Vec::new();
    for ((kind, published), r) in cases.iter().zip(&results) {
        let (lo, hi) = (r.baseline - 0.01, published + 0.03);
        let ok = (lo..=hi).contains(&r.score) && r.minutes <= 60.0;
        pass &= ok;
        lines.push(format!(
            "{kind}: HD {:.4} band [{lo:.4}, {hi:.4}] baseline {:.4} mean hidden {:.1} in {:.1} min",
            r.score, r.baseline, r.hidden, r.minutes
        ));
    }
    Outcome::new(pass, lines.join("; "))
}

fn increasing(rows: &[f64]) -> bool {
    rows.windows(2).all(|w| w[1] > w[0])
}

/// Linear interpolation of E⁺ at the γ where E[K⁺] crosses `k`.
fn edges_at(rows: &[StudyRow], k: f64) -> Option<f64> {
    rows.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        (a.k_plus_mean <= k && k <= b.k_plus_mean).then(|| {
            let t = (k - a.k_plus_mean) / (b.k_plus_mean - a.k_plus_mean);
            a.e_plus_mean + t * (b.e_plus_mean - a.e_plus_mean)
        })
    })
}

fn hyper_study_shape() -> Outcome {
    let draws = 4000;
    let rng = RngStream::new(9);
    let gammas = [0.5, 1.0, 2.0, 4.0, 8.0];
    let alphas = [0.5, 2.0, 8.0];
    let mut k_rising = true;
    let mut at_fixed_k = Vec::new();
    let mut parts = Vec::new();
    for (i, alpha) in alphas.iter().enumerate() {
        let grid: Vec<Hyperparams> = gammas.iter().map(|g| hp(*alpha, *g, 1.0)).collect();
        let rows = hyper_study(&grid, 1, draws, &rng.substream(i as u64)).unwrap();
        let k: Vec<f64> = rows.iter().map(|r| r.k_plus_mean).collect();
        k_rising &= increasing(&k);
        let se = rows.iter().map(|r| r.k_plus_se).fold(0.0, f64::max);
        parts.push(format!("alpha {alpha}: E[K+] {k:.2?} (se <= {se:.2})"));
        at_fixed_k.push(edges_at(&rows, 4.0));
    }
    let edges: Option<Vec<f64>> = at_fixed_k.into_iter().collect();
    let edges_falling = edges.as_ref().is_some_and(|e| e.windows(2).all(|w| w[1] < w[0]));
    parts.push(format!("E[E+] at E[K+]=4 by alpha {edges:.2?}"));

    let mut k_by_obs = Vec::new();
    for (i, n_obs) in [1usize, 2, 4, 8].iter().enumerate() {
        let rows = hyper_study(&[hp(1.0, 1.0, 1.0)], *n_obs, draws, &rng.substream(100 + i as u64)).unwrap();
        k_by_obs.push(rows[0].k_plus_mean - *n_obs as f64);
    }
    let obs_rising = increasing(&k_by_obs);
    parts.push(format!("hidden nodes by observables 1,2,4,8: {k_by_obs:.2?}"));
    Outcome::new(k_rising && edges_falling && obs_rising, parts.join("; "))
}

fn convnet_shapes() -> Outcome {
    let got = (
        compute_channels(0.0, 5, 4).unwrap(),
        compute_channels(1.0, 5, 4).unwrap(),
        compute_pixels(1.0, 5, 784).unwrap(),
    );
    Outcome::new(got == (36, 5, 784), format!("channels(0)={}, channels(1)={}, pixels(1)={}", got.0, got.1, got.2))
}

fn run_twice(args: &[&str], outputs: &[&str]) -> Result<bool, String> {
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let status = Command::new(env!("CARGO_BIN_EXE_icp"))
            .args(args)
            .current_dir(dir.path())
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("{args:?}: {}", String::from_utf8_lossy(&status.stderr)));
        }
        let mut bytes = status.stdout;
        for name in outputs {
            bytes.extend(std::fs::read(dir.path().join(name)).map_err(|e| format!("{name}: {e}"))?);
        }
        runs.push(bytes);
    }
    Ok(runs[0] == runs[1])
}

fn determinism() -> Outcome {
    let synth = "synth --kind two-moons --n 300 --seed 5 --out d.csv";
    let cases: Vec<(String, Vec<&str>)> = vec![
        ("sample-prior --stars 3 --draws 200 --seed 42 --out p.jsonl".into(), vec!["p.jsonl"]),
        ("mcmc --stars-theta0 2 --iters 500 --seed 42 --out m.jsonl".into(), vec!["m.jsonl"]),
        ("mcmc --stars-theta0 1 --iters 200 --chains 2 --seed 42 --out c.jsonl".into(), vec!["c.0.jsonl", "c.1.jsonl"]),
        (synth.into(), vec!["d.csv"]),
        ("hyper-study --alphas 1,2 --gammas 1,3 --draws 300 --seed 42".into(), vec![]),
    ];
    let mut failures = Vec::new();
    for (line, outs) in &cases {
        let args: Vec<&str> = line.split_whitespace().collect();
        match run_twice(&args, outs) {
            Ok(true) => {}
            Ok(false) => failures.push(format!("{} differs", args[0])),
            Err(e) => failures.push(e),
        }
    }
    // fit → fantasy → hellinger in one directory
    let pipeline = || -> Result<Vec<u8>, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let steps = [
            synth,
            "fit --data d.csv --iters 60 --burnin 30 --thin 3 --seed 42 --out r.jsonl",
            "fantasy --chains r.jsonl --n 500 --seed 42 --out f.csv",
            "hellinger --a f.csv --b d.csv",
        ];
        let mut bytes = Vec::new();
        for step in steps {
            let out = Command::new(env!("CARGO_BIN_EXE_icp"))
                .args(step.split_whitespace())
                .current_dir(dir.path())
                .output()
                .map_err(|e| e.to_string())?;
            if !out.status.success() {
                return Err(format!("{step}: {}", String::from_utf8_lossy(&out.stderr)));
            }
            bytes.extend(out.stdout);
        }
        for name in ["r.jsonl", "f.csv"] {
            bytes.extend(std::fs::read(dir.path().join(name)).map_err(|e| e.to_string())?);
        }
        Ok(bytes)
    };
    match (pipeline(), pipeline()) {
        (Ok(a), Ok(b)) if a == b => {}
        (Ok(_), Ok(_)) => failures.push("fit pipeline differs".into()),
        (Err(e), _) | (_, Err(e)) => failures.push(e),
    }
    let detail = if failures.is_empty() {
        format!("{} commands and the fit pipeline reproduce byte for byte", cases.len())
    } else {
        failures.join("; ")
    };
    Outcome::new(failures.is_empty(), detail)
}

fn main() {
    let criteria = [
        Criterion { number: 1, name: "Gibbs odds equal density ratios", budget: Duration::from_secs(10), run: gibbs_odds },
        Criterion { number: 2, name: "birth and death ratios pair up", budget: Duration::from_secs(10), run: birth_death_pairing },
        Criterion { number: 3, name: "finite form converges to the limit", budget: Duration::from_secs(30), run: finite_convergence },
        Criterion { number: 4, name: "lone observed node closed form", budget: Duration::from_secs(1), run: closed_form },
        Criterion { number: 5, name: "sampler and prior chain agree", budget: Duration::from_secs(300), run: stationarity },
        Criterion { number: 6, name: "sampler exact on small events", budget: Duration::from_secs(300), run: sampler_exactness },
        Criterion { number: 7, name: "unit density normalizes", budget: Duration::from_secs(1), run: unit_normalization },
        Criterion { number: 8, name: "density estimation within bands", budget: Duration::from_secs(7200), run: density_estimation },
        Criterion { number: 9, name: "hyperparameter study shape", budget: Duration::from_secs(600), run: hyper_study_shape },
        Criterion { number: 10, name: "convnet shape formulas", budget: Duration::from_secs(1), run: convnet_shapes },
        Criterion { number: 11, name: "commands are deterministic", budget: Duration::from_secs(300), run: determinism },
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.number)) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Outcome::new(false, format!("panicked: {msg}"))
            });
        let elapsed = start.elapsed();
        let in_time = elapsed <= c.budget;
        let pass = outcome.pass && in_time;
        println!(
            "{} criterion {:>2} ({}): {} [{:.1}s{}]",
            if pass { "PASS" } else { "FAIL" },
            c.number,
            c.name,
            outcome.detail,
            elapsed.as_secs_f64(),
            if in_time { String::new() } else { format!(", budget {}s", c.budget.as_secs()) },
        );
        ran += 1;
        if !pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 && std::env::var_os("ICP_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
