//! Hellinger distance between sample sets, prior hyperparameter studies and
//! synthetic datasets.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{IcpError, Result};
use crate::graph::count_stats;
use crate::hyperparams::Hyperparams;
use crate::nlgbn::Dataset;
use crate::prior::{sample_prior, SamplerOptions, StarPlacement};
use crate::rng::RngStream;
use crate::special::ln_gamma;

/// Density estimator behind a Hellinger distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum HellingerMethod {
    /// Gaussian kernel densities (Scott bandwidth per sample and axis)
    /// evaluated on a shared grid with `grid` points per axis.
    Kde { grid: usize },
    /// Shared lattice over the joint bounding box with `bins` cells per axis.
    Histogram { bins: usize },
    /// k-nearest-neighbour density ratios.
    Knn { k: usize },
}

impl HellingerMethod {
    /// Kernel densities up to three dimensions, k-NN above.
    pub fn default_for(dim: usize) -> Self {
        match dim {
            0..=2 => HellingerMethod::Kde { grid: 128 },
            3 => HellingerMethod::Kde { grid: 48 },
            _ => HellingerMethod::Knn { k: 5 },
        }
    }
}

impl fmt::Display for HellingerMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HellingerMethod::Kde { grid } => write!(f, "kde(grid={grid})"),
            HellingerMethod::Histogram { bins } => write!(f, "histogram(bins={bins})"),
            HellingerMethod::Knn { k } => write!(f, "knn(k={k})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HellingerEstimate {
    pub value: f64,
    pub method: HellingerMethod,
}

fn distance_from_overlap(bc: f64) -> f64 {
    (1.0 - bc.clamp(0.0, 1.0)).sqrt()
}

/// Hellinger distance between the distributions behind two sample sets.
/// Symmetric in its arguments, bit for bit.
pub fn hellinger(p: &Dataset, q: &Dataset, method: HellingerMethod) -> Result<HellingerEstimate> {
    if p.is_empty() || q.is_empty() {
        return Err(IcpError::InvalidArgument("Hellinger distance needs nonempty samples".into()));
    }
    if p.dim() != q.dim() {
        return Err(IcpError::InvalidArgument(format!(
            "dimension mismatch: {} vs {}",
            p.dim(),
            q.dim()
        )));
    }
    if p.dim() == 0 {
        return Err(IcpError::InvalidArgument("samples have no columns".into()));
    }
    let value = match method {
        HellingerMethod::Histogram { bins } if bins >= 1 => histogram(p, q, bins),
        HellingerMethod::Kde { grid } if grid >= 2 => kde(p, q, grid)?,
        HellingerMethod::Knn { k } if k >= 1 && k < p.len() && k < q.len() => knn(p, q, k),
        _ => return Err(IcpError::InvalidArgument(format!("invalid estimator settings {method}"))),
    };
    Ok(HellingerEstimate { value, method })
}

/// Joint bounding box of both samples, per axis.
fn bounds(p: &Dataset, q: &Dataset) -> Vec<(f64, f64)> {
    (0..p.dim())
        .map(|j| {
            let all = p.rows().iter().chain(q.rows()).map(|r| r[j]);
            all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
        })
        .collect()
}

fn histogram(p: &Dataset, q: &Dataset, bins: usize) -> f64 {
    let bounds = bounds(p, q);
    let cell = |row: &[f64]| -> Vec<usize> {
        row.iter()
            .zip(&bounds)
            .map(|(x, (lo, hi))| {
                if hi > lo {
                    (((x - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)
                } else {
                    0
                }
            })
            .collect()
    };
    let mut counts: BTreeMap<Vec<usize>, (u64, u64)> = BTreeMap::new();
    for row in p.rows() {
        counts.entry(cell(row)).or_default().0 += 1;
    }
    for row in q.rows() {
        counts.entry(cell(row)).or_default().1 += 1;
    }
    let (np, nq) = (p.len() as f64, q.len() as f64);
    let bc: f64 = counts
        .values()
        .map(|(a, b)| ((*a as f64 / np) * (*b as f64 / nq)).sqrt())
        .sum();
    distance_from_overlap(bc)
}

fn scott_bandwidths(data: &Dataset) -> Vec<f64> {
    let n = data.len() as f64;
    let factor = n.powf(-1.0 / (data.dim() as f64 + 4.0));
    (0..data.dim())
        .map(|j| {
            let col = data.column(j);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
            let sd = var.sqrt();
            factor * if sd > 0.0 { sd } else { 1e-3 }
        })
        .collect()
}

/// Kernel density of `data` on the grid, normalized to sum to one.
fn grid_density(data: &Dataset, axes: &[Vec<f64>]) -> Vec<f64> {
    let h = scott_bandwidths(data);
    let g = axes[0].len();
    let d = axes.len();
    let total = g.pow(d as u32);
    let mut density = vec![0.0; total];
    let mut factors: Vec<Vec<f64>> = vec![vec![0.0; g]; d];
    for row in data.rows() {
        for j in 0..d {
            for (f, t) in factors[j].iter_mut().zip(&axes[j]) {
                let z = (t - row[j]) / h[j];
                *f = (-0.5 * z * z).exp();
            }
        }
        match d {
            1 => {
                for (x, f) in density.iter_mut().zip(&factors[0]) {
                    *x += f;
                }
            }
            2 => {
                for a in 0..g {
                    let fa = factors[0][a];
                    if fa < 1e-300 {
                        continue;
                    }
                    let slice = &mut density[a * g..(a + 1) * g];
                    for (x, fb) in slice.iter_mut().zip(&factors[1]) {
                        *x += fa * fb;
                    }
                }
            }
            _ => {
                for a in 0..g {
                    let fa = factors[0][a];
                    if fa < 1e-300 {
                        continue;
                    }
                    for b in 0..g {
                        let fab = fa * factors[1][b];
                        if fab < 1e-300 {
                            continue;
                        }
                        let slice = &mut density[(a * g + b) * g..(a * g + b + 1) * g];
                        for (x, fc) in slice.iter_mut().zip(&factors[2]) {
                            *x += fab * fc;
                        }
                    }
                }
            }
        }
    }
    let sum: f64 = density.iter().sum();
    if sum > 0.0 {
        for x in &mut density {
            *x /= sum;
        }
    }
    density
}

fn kde(p: &Dataset, q: &Dataset, grid: usize) -> Result<f64> {
    if p.dim() > 3 {
        return Err(IcpError::InvalidArgument(
            "kernel estimator supports at most three dimensions".into(),
        ));
    }
    let (hp, hq) = (scott_bandwidths(p), scott_bandwidths(q));
    let axes: Vec<Vec<f64>> = bounds(p, q)
        .iter()
        .enumerate()
        .map(|(j, (lo, hi))| {
            let pad = 4.0 * hp[j].max(hq[j]);
            let (lo, hi) = (lo - pad, hi + pad);
            (0..grid)
                .map(|i| lo + (hi - lo) * i as f64 / (grid - 1) as f64)
                .collect()
        })
        .collect();
    let (dp, dq) = (grid_density(p, &axes), grid_density(q, &axes));
    let bc: f64 = dp.iter().zip(&dq).map(|(a, b)| (a * b).sqrt()).sum();
    Ok(distance_from_overlap(bc))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distance from `x` to its k-th nearest neighbour in `pool`,
/// optionally skipping one index.
fn kth_sq_dist(x: &[f64], pool: &Dataset, k: usize, skip: Option<usize>) -> f64 {
    let mut nearest: Vec<f64> = Vec::with_capacity(k + 1);
    for (i, row) in pool.rows().iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        let d = sq_dist(x, row);
        if nearest.len() < k || d < nearest[k - 1] {
            let pos = nearest.partition_point(|v| *v <= d);
            nearest.insert(pos, d);
            nearest.truncate(k);
        }
    }
    nearest[k - 1]
}

/// Mean over `from` of sqrt(q̂/p̂) with k-NN densities: an estimate of the
/// Bhattacharyya coefficient under `from`.
fn knn_overlap(from: &Dataset, other: &Dataset, k: usize) -> f64 {
    let d = from.dim() as f64;
    let (n, m) = (from.len() as f64, other.len() as f64);
    let terms: f64 = from
        .rows()
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let own = kth_sq_dist(x, from, k, Some(i)).max(1e-300);
            let cross = kth_sq_dist(x, other, k, None).max(1e-300);
            // ratio of k/(n r^d) densities, with r² given
            (((n - 1.0) / m) * (own / cross).powf(0.5 * d)).sqrt()
        })
        .sum();
    terms / n
}

fn knn(p: &Dataset, q: &Dataset, k: usize) -> f64 {
    // finite-k correction for the square root of a k-NN density ratio
    let kf = k as f64;
    let correction = (2.0 * ln_gamma(kf) - ln_gamma(kf + 0.5) - ln_gamma(kf - 0.5)).exp();
    let (a, b) = (knn_overlap(p, q, k), knn_overlap(q, p, k));
    distance_from_overlap(0.5 * correction * (a + b))
}

/// One grid point of a prior study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudyRow {
    pub alpha: f64,
    pub gamma: f64,
    pub k_plus_mean: f64,
    pub k_plus_se: f64,
    pub e_plus_mean: f64,
    pub e_plus_se: f64,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimates of E[K⁺] and E[E⁺] with `n_obs` observed nodes at
/// order value 0. Grid point `i` uses substream `i`, so rows do not depend on
/// the grid's other entries.
pub fn hyper_study(grid: &[Hyperparams], n_obs: usize, draws: usize, rng: &RngStream) -> Result<Vec<StudyRow>> {
    if draws == 0 || n_obs == 0 {
        return Err(IcpError::InvalidArgument("study needs at least one draw and one observable".into()));
    }
    let stars = StarPlacement::Fixed(vec![0.0; n_obs]);
    grid.iter()
        .enumerate()
        .map(|(i, hp)| {
            let mut stream = rng.substream(i as u64);
            let mut k = Vec::with_capacity(draws);
            let mut e = Vec::with_capacity(draws);
            for _ in 0..draws {
                let dag = sample_prior(hp, &stars, SamplerOptions::default(), &mut stream)?;
                let stats = count_stats(&dag)?;
                k.push(stats.k_plus as f64);
                e.push(stats.e_plus() as f64);
            }
            let (k_plus_mean, k_plus_se) = mean_se(&k);
            let (e_plus_mean, e_plus_se) = mean_se(&e);
            Ok(StudyRow {
                alpha: hp.alpha,
                gamma: hp.gamma,
                k_plus_mean,
                k_plus_se,
                e_plus_mean,
                e_plus_se,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    Ring,
    TwoMoons,
    Pinwheel,
}

impl SyntheticKind {
    /// Noise level used when none is given.
    pub fn default_noise(self) -> f64 {
        match self {
            SyntheticKind::Ring => 0.1,
            SyntheticKind::TwoMoons => 0.1,
            SyntheticKind::Pinwheel => 0.3,
        }
    }
}

impl FromStr for SyntheticKind {
    type Err = IcpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(SyntheticKind::Ring),
            "two-moons" | "two_moons" | "moons" => Ok(SyntheticKind::TwoMoons),
            "pinwheel" => Ok(SyntheticKind::Pinwheel),
            other => Err(IcpError::InvalidArgument(format!("unknown synthetic dataset '{other}'"))),
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticKind::Ring => "ring",
            SyntheticKind::TwoMoons => "two-moons",
            SyntheticKind::Pinwheel => "pinwheel",
        })
    }
}

/// Arms, tangential spread and twist rate of the pinwheel.
const PINWHEEL_ARMS: usize = 5;
const PINWHEEL_TANGENTIAL: f64 = 0.05;
const PINWHEEL_RATE: f64 = 0.25;

/// Two-dimensional toy data.
///
/// * ring: uniform angle on the unit circle, radius 1 + noise·N(0, 1);
/// * two-moons: upper arc (cos t, sin t) and lower arc (1 − cos t, ½ − sin t)
///   with t ~ U(0, π), alternating, plus isotropic noise;
/// * pinwheel: five arms, radial spread `noise`, tangential spread 0.05,
///   twisted by 0.25·exp(radial offset).
pub fn make_synthetic(kind: SyntheticKind, n: usize, noise: f64, rng: &mut RngStream) -> Result<Dataset> {
    if n == 0 {
        return Err(IcpError::InvalidArgument("synthetic dataset needs n ≥ 1".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(IcpError::InvalidArgument(format!("noise {noise} must be finite and nonnegative")));
    }
    let normal = |rng: &mut RngStream| -> f64 { StandardNormal.sample(rng) };
    let rows = (0..n)
        .map(|i| match kind {
            SyntheticKind::Ring => {
                let angle = rng.random_range(0.0..2.0 * PI);
                let r = 1.0 + noise * normal(rng);
                vec![r * angle.cos(), r * angle.sin()]
            }
            SyntheticKind::TwoMoons => {
                let t = rng.random_range(0.0..PI);
                let (x, y) = if i % 2 == 0 {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                };
                vec![x + noise * normal(rng), y + noise * normal(rng)]
            }
            SyntheticKind::Pinwheel => {
                let arm = i % PINWHEEL_ARMS;
                let radial = 1.0 + noise * normal(rng);
                let tangential = PINWHEEL_TANGENTIAL * normal(rng);
                let angle = 2.0 * PI * arm as f64 / PINWHEEL_ARMS as f64 + PINWHEEL_RATE * (radial - 1.0).exp();
                let (s, c) = angle.sin_cos();
                vec![c * radial - s * tangential, s * radial + c * tangential]
            }
        })
        .collect();
    Dataset::from_rows(rows)
}
