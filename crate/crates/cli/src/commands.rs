use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use icp_core::chain::{parse_chain, read_chain, ChainSample, JsonlSink, SampleSink};
use icp_core::convnet::{dag_to_arch, ArchOptions};
use icp_core::evaluation::{hellinger, hyper_study, make_synthetic, HellingerMethod, SyntheticKind};
use icp_core::mcmc::{run_chain, MoveStats, NoLikelihood, Schedule, TargetSpec};
use icp_core::nlgbn::{fantasy, initial_dag, Dataset, NlgbnConfig, NlgbnModel, StructureMode};
use icp_core::prior::{sample_prior, BackwardRule, SamplerOptions, StarPlacement};
use icp_core::{GraphRecord, Hyperparams, OrderedDag, RngStream};

use crate::config::{pick, pick_required, FileConfig, DEFAULT_SEED};
use crate::{usage, Cli, Command, HyperArgs};

/// Structure sweeps of `fit` when `--iters` is absent.
const FIT_ITERS: u64 = 50_000;
/// Parameter and activation passes per sweep in `fit`.
const FIT_PASSES: usize = 5;
const MCMC_ITERS: u64 = 10_000;

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path).map_err(|e| usage(format!("{e:#}")))?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::SamplePrior(a) => sample_prior_cmd(a, &file),
        Command::Mcmc(a) => mcmc_cmd(a, &file),
        Command::Fit(a) => fit_cmd(a, &file),
        Command::Fantasy(a) => fantasy_cmd(a, &file),
        Command::Hellinger(a) => hellinger_cmd(a),
        Command::HyperStudy(a) => hyper_study_cmd(a, &file),
        Command::Dag2cnn(a) => dag2cnn_cmd(a, &file),
        Command::Merge(a) => merge_cmd(a, &file),
        Command::Synth(a) => synth_cmd(a, &file),
    }
}

fn hypers(args: &HyperArgs, file: &FileConfig) -> anyhow::Result<Hyperparams> {
    let alpha = pick("alpha", args.alpha, file.alpha, 1.0);
    let gamma = pick("gamma", args.gamma, file.gamma, 1.0);
    let phi = pick("phi", args.phi, file.phi, 1.0);
    Hyperparams::new(alpha, gamma, phi).map_err(|e| usage(e.to_string()))
}

fn seed(flag: Option<u64>, file: &FileConfig) -> u64 {
    pick("seed", flag, file.seed, DEFAULT_SEED)
}

/// Buffered writer on `path`, or stdout when absent.
fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// `run.jsonl` -> `run.3.jsonl`.
fn chain_path(out: &Path, index: usize) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}.{index}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{index}"),
    };
    out.with_file_name(name)
}

fn sample_prior_cmd(a: crate::SamplePriorArgs, file: &FileConfig) -> anyhow::Result<()> {
    let hp = hypers(&a.hyper, file)?;
    let stars = match (a.star_thetas, pick_required("stars", a.stars, file.stars)) {
        (Some(t), _) => StarPlacement::Fixed(t),
        (None, Some(n)) => StarPlacement::Random(n),
        (None, None) => StarPlacement::Fixed(vec![0.0]),
    };
    let backward = match pick_required("backward", a.backward, file.backward.clone()).as_deref() {
        None | Some("binomial") => BackwardRule::Binomial,
        Some("beta-binomial") => BackwardRule::BetaBinomial,
        Some(other) => return Err(usage(format!("unknown backward rule '{other}'"))),
    };
    let opts = SamplerOptions { backward, ibp: a.ibp };
    let draws = pick("draws", a.draws, file.draws, 1);
    let out = pick_required("out", a.out, file.out.clone());
    let mut rng = RngStream::new(seed(a.seed, file));
    let mut w = output(out.as_deref())?;
    for _ in 0..draws {
        let dag = sample_prior(&hp, &stars, opts, &mut rng).map_err(|e| match e {
            icp_core::IcpError::InvalidArgument(_) | icp_core::IcpError::Domain(_) => usage(e.to_string()),
            e => e.into(),
        })?;
        writeln!(w, "{}", dag.to_json())?;
    }
    w.flush()?;
    Ok(())
}

struct ChainPlan {
    iters: u64,
    schedule: Schedule,
    chains: usize,
    seed: u64,
    out: Option<PathBuf>,
}

fn chain_plan(a: &crate::ChainArgs, file: &FileConfig, iters: u64, burnin: u64, thin: u64) -> anyhow::Result<ChainPlan> {
    let iters = pick("iters", a.iters, file.iters, iters);
    let burn_in = pick("burnin", a.burnin, file.burnin, burnin);
    let thin = pick("thin", a.thin, file.thin, thin);
    if thin == 0 {
        return Err(usage("--thin must be positive"));
    }
    let chains = pick("chains", a.chains, file.chains, 1);
    let out = pick_required("out", a.out.clone(), file.out.clone());
    if chains == 0 {
        return Err(usage("--chains must be positive"));
    }
    if chains > 1 && out.is_none() {
        return Err(usage("--chains above 1 needs --out"));
    }
    Ok(ChainPlan {
        iters,
        schedule: Schedule { burn_in, thin, ..Schedule::default() },
        chains,
        seed: seed(a.seed, file),
        out,
    })
}

fn log_stats(chain: usize, stats: &MoveStats) {
    log::info!(
        "chain {chain}: acceptance gibbs {:.3} birth {:.3} death {:.3} order {:.3} alpha {:.3} gamma {:.3} phi {:.3}",
        stats.gibbs.rate(),
        stats.birth.rate(),
        stats.death.rate(),
        stats.order.rate(),
        stats.alpha.rate(),
        stats.gamma.rate(),
        stats.phi.rate(),
    );
}

/// Runs one chain per seed, in parallel when there are several. `job`
/// builds the hook and starting graph and drives the chain into the sink.
fn run_chains<F>(plan: &ChainPlan, job: F) -> anyhow::Result<()>
where
    F: Fn(usize, &mut RngStream, &mut dyn SampleSink) -> anyhow::Result<()> + Sync,
{
    let one = |i: usize| -> anyhow::Result<()> {
        let mut rng = RngStream::new(plan.seed.wrapping_add(i as u64));
        match &plan.out {
            Some(out) => {
                let path = if plan.chains > 1 { chain_path(out, i) } else { out.clone() };
                let mut sink = JsonlSink::create(&path).with_context(|| format!("creating {}", path.display()))?;
                job(i, &mut rng, &mut sink)
            }
            None => {
                let mut sink = JsonlSink::new(io::stdout().lock());
                job(i, &mut rng, &mut sink)
            }
        }
    };
    if plan.chains == 1 {
        return one(0);
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..plan.chains).map(|i| s.spawn(move || one(i))).collect();
        handles
            .into_iter()
            .enumerate()
            .try_for_each(|(i, h)| {
                h.join()
                    .map_err(|_| anyhow::anyhow!("chain {i} panicked"))?
                    .with_context(|| format!("chain {i}"))
            })
    })
}

fn mcmc_cmd(a: crate::McmcArgs, file: &FileConfig) -> anyhow::Result<()> {
    let hp = hypers(&a.hyper, file)?;
    let mut target = TargetSpec::new(hp);
    target.infer_hypers = !(a.fix_hypers || file.fix_hypers.unwrap_or(false));
    let n_obs = pick("stars-theta0", a.stars_theta0, file.stars, 1);
    let init = initial_dag(n_obs).map_err(|e| usage(e.to_string()))?;
    let plan = chain_plan(&a.chain, file, MCMC_ITERS, 0, 1)?;
    run_chains(&plan, |i, rng, sink| {
        let stats = run_chain(&target, init.clone(), &plan.schedule, plan.iters, rng, sink, &mut NoLikelihood)?;
        log_stats(i, &stats);
        Ok(())
    })
}

fn fit_cmd(a: crate::FitArgs, file: &FileConfig) -> anyhow::Result<()> {
    let data_path = pick_required("data", a.data.clone(), file.data.clone()).ok_or_else(|| usage("--data is required"))?;
    let data = Dataset::read_csv(&data_path).with_context(|| format!("reading {}", data_path.display()))?;
    let hp = hypers(&a.hyper, file)?;
    let mut target = TargetSpec::new(hp);
    target.infer_hypers = !(a.fix_hypers || file.fix_hypers.unwrap_or(false));
    target.pin_observed = !a.free_observed;
    let structure = match pick_required("structure", a.structure.clone(), file.structure.clone()).as_deref() {
        None | Some("collapsed") => StructureMode::Collapsed,
        Some("prior") => StructureMode::Prior,
        Some(other) => return Err(usage(format!("unknown structure mode '{other}'"))),
    };
    let passes = pick("passes", a.passes, file.passes, FIT_PASSES);
    if passes == 0 {
        return Err(usage("--passes must be positive"));
    }
    let config = NlgbnConfig { structure, passes, ..NlgbnConfig::default() };
    let iters = a.chain.iters.or(file.iters).unwrap_or(FIT_ITERS);
    let plan = chain_plan(&a.chain, file, FIT_ITERS, iters / 2, 10)?;
    let init = initial_dag(data.dim())?;
    run_chains(&plan, |i, rng, sink| {
        let mut model = NlgbnModel::new(&init, &data, config, rng)?;
        let stats = run_chain(&target, init.clone(), &plan.schedule, plan.iters, rng, sink, &mut model)?;
        log_stats(i, &stats);
        let s = model.stats;
        log::info!(
            "chain {i}: acceptance activations {:.3} parameters {:.3}",
            rate(s.activation_accepted, s.activation_proposed),
            rate(s.param_accepted, s.param_proposed),
        );
        Ok(())
    })
}

fn rate(accepted: u64, proposed: u64) -> f64 {
    if proposed == 0 {
        0.0
    } else {
        accepted as f64 / proposed as f64
    }
}

fn read_chains(paths: &[PathBuf]) -> anyhow::Result<Vec<ChainSample>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(read_chain(p).with_context(|| format!("reading {}", p.display()))?);
    }
    Ok(all)
}

fn fantasy_cmd(a: crate::FantasyArgs, file: &FileConfig) -> anyhow::Result<()> {
    let samples = read_chains(&a.chains)?;
    let mut rng = RngStream::new(seed(a.seed, file));
    let points = fantasy(&samples, a.n, &mut rng)?;
    let out = pick_required("out", a.out, file.out.clone());
    let mut w = output(out.as_deref())?;
    points.write_csv_to(&mut w)?;
    w.flush()?;
    Ok(())
}

fn hellinger_cmd(a: crate::HellingerArgs) -> anyhow::Result<()> {
    let p = Dataset::read_csv(&a.a).with_context(|| format!("reading {}", a.a.display()))?;
    let q = Dataset::read_csv(&a.b).with_context(|| format!("reading {}", a.b.display()))?;
    let method = match (a.bins, a.knn) {
        (Some(bins), _) => HellingerMethod::Histogram { bins },
        (None, Some(k)) => HellingerMethod::Knn { k },
        (None, None) => HellingerMethod::default_for(p.dim()),
    };
    let est = hellinger(&p, &q, method)?;
    log::info!("estimator: {}", est.method);
    println!("{}", est.value);
    Ok(())
}

fn hyper_study_cmd(a: crate::HyperStudyArgs, file: &FileConfig) -> anyhow::Result<()> {
    let mut grid = Vec::with_capacity(a.alphas.len() * a.gammas.len());
    for &alpha in &a.alphas {
        for &gamma in &a.gammas {
            grid.push(Hyperparams::new(alpha, gamma, a.phi).map_err(|e| usage(e.to_string()))?);
        }
    }
    let draws = pick("draws", a.draws, file.draws, 1000);
    if draws == 0 || a.observables == 0 {
        return Err(usage("--draws and --observables must be positive"));
    }
    let rng = RngStream::new(seed(a.seed, file));
    let rows = hyper_study(&grid, a.observables, draws, &rng)?;
    let out = pick_required("out", a.out, file.out.clone());
    let mut w = output(out.as_deref())?;
    writeln!(w, "alpha,gamma,k_plus_mean,k_plus_se,e_plus_mean,e_plus_se")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.alpha, r.gamma, r.k_plus_mean, r.k_plus_se, r.e_plus_mean, r.e_plus_se
        )?;
    }
    w.flush()?;
    Ok(())
}

/// A graph record, or the last sample of a chain file.
fn load_graph(path: &Path) -> anyhow::Result<OrderedDag> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(record) = serde_json::from_str::<GraphRecord>(text.trim()) {
        return Ok(OrderedDag::from_record(&record)?);
    }
    let samples = parse_chain(text.as_bytes()).with_context(|| format!("parsing {}", path.display()))?;
    match samples.last() {
        Some(s) => Ok(s.dag()?),
        None => bail!("{} holds no graph", path.display()),
    }
}

fn dag2cnn_cmd(a: crate::Dag2CnnArgs, file: &FileConfig) -> anyhow::Result<()> {
    let dag = load_graph(&a.graph)?;
    let opts = ArchOptions { kernel: a.kernel, classes: a.classes };
    let arch = dag_to_arch(&dag, a.bins, a.n0, a.pixels, opts)?;
    log::info!("{} layers, {} edges, depth {}, width {}", arch.layers.len(), arch.edges.len(), arch.depth(), arch.width());
    let out = pick_required("out", a.out, file.out.clone());
    let mut w = output(out.as_deref())?;
    writeln!(w, "{}", arch.to_json()?)?;
    w.flush()?;
    Ok(())
}

fn merge_cmd(a: crate::MergeArgs, file: &FileConfig) -> anyhow::Result<()> {
    let samples = read_chains(&a.inputs)?;
    let out = pick_required("out", a.out, file.out.clone());
    let mut sink = JsonlSink::new(output(out.as_deref())?);
    for s in &samples {
        sink.write(s)?;
    }
    Ok(())
}

fn synth_cmd(a: crate::SynthArgs, file: &FileConfig) -> anyhow::Result<()> {
    let kind: SyntheticKind = a.kind.parse().map_err(|e: icp_core::IcpError| usage(e.to_string()))?;
    let noise = a.noise.unwrap_or_else(|| kind.default_noise());
    let mut rng = RngStream::new(seed(a.seed, file));
    let data = make_synthetic(kind, a.n, noise, &mut rng).map_err(|e| usage(e.to_string()))?;
    let out = pick_required("out", a.out, file.out.clone());
    let mut w = output(out.as_deref())?;
    data.write_csv_to(&mut w)?;
    w.flush()?;
    Ok(())
}
