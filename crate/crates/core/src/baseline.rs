//! Low-rank Lloyd's algorithm (lr-Lloyd).

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{seeded_rng, ObservationSet};
use crate::error::{Error, Result};
use crate::eval::pca_embed;
use crate::linalg::{block_to_matrix, matrix_to_block, norm_sq, sub, truncate_rank};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    RandomAssignment,
    /// Unfolding SVD plus k-means on the scores. Not the tensor-based
    /// initialization of the original lr-Lloyd* method.
    Spectral,
}

impl InitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            InitMode::RandomAssignment => "random-assignment",
            InitMode::Spectral => "unfolding-spectral",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LloydOptions {
    pub k: usize,
    pub rank: usize,
    pub max_iter: usize,
    pub init: InitMode,
    pub seed: u64,
}

impl LloydOptions {
    pub fn new(k: usize, rank: usize) -> Self {
        LloydOptions {
            k,
            rank,
            max_iter: 100,
            init: InitMode::RandomAssignment,
            seed: 0,
        }
    }

    fn validate(&self, obs: &ObservationSet) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("K must be >= 1".into()));
        }
        if self.k > obs.n() {
            return Err(Error::InvalidArgument(format!(
                "K = {} exceeds the sample count {}",
                self.k,
                obs.n()
            )));
        }
        if self.rank == 0 || self.rank > obs.d2() {
            return Err(Error::InvalidArgument(format!(
                "rank {} must lie in 1..={}",
                self.rank,
                obs.d2()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LloydResult {
    pub labels: Vec<usize>,
    /// Row-major `d1 x d2` centroid blocks.
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Objective after each centroid update.
    pub objective: Vec<f64>,
    pub converged: bool,
    pub init: InitMode,
}

fn rank_r_mean(obs: &ObservationSet, members: &[usize], rank: usize) -> Result<Vec<f64>> {
    let mut mean = vec![0.0; obs.dim()];
    for &i in members {
        for (m, v) in mean.iter_mut().zip(obs.sample(i)) {
            *m += v;
        }
    }
    let c = members.len() as f64;
    mean.iter_mut().for_each(|m| *m /= c);
    let t = truncate_rank(&block_to_matrix(&mean, obs.d1(), obs.d2()), rank)?;
    Ok(row_major(&t))
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = vec![0.0; m.len()];
    matrix_to_block(m, &mut out);
    out
}

fn nearest(sample: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = norm_sq(&sub(sample, cen));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn objective(obs: &ObservationSet, labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    (0..obs.n())
        .into_par_iter()
        .map(|i| norm_sq(&sub(obs.sample(i), &centroids[labels[i]])))
        .sum()
}

/// Rank-`r` centroids for the current labels. An empty cluster takes the
/// rank-`r` truncation of the sample farthest from its own centroid, which
/// moves to that cluster.
fn update_centroids(obs: &ObservationSet, labels: &mut [usize], k: usize, rank: usize) -> Result<Vec<Vec<f64>>> {
    let mut members = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let mut centroids: Vec<Option<Vec<f64>>> = members
        .par_iter()
        .map(|m| if m.is_empty() { Ok(None) } else { rank_r_mean(obs, m, rank).map(Some) })
        .collect::<Result<_>>()?;
    while let Some(empty) = centroids.iter().position(|c| c.is_none()) {
        let mut far = None;
        let mut far_d = -1.0;
        for i in 0..obs.n() {
            let l = labels[i];
            if members[l].len() < 2 {
                continue;
            }
            if let Some(c) = &centroids[l] {
                let d = norm_sq(&sub(obs.sample(i), c));
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
        }
        let i = far.ok_or_else(|| Error::InvalidArgument("cannot reseed an empty cluster".into()))?;
        let old = labels[i];
        members[old].retain(|&j| j != i);
        centroids[old] = Some(rank_r_mean(obs, &members[old], rank)?);
        labels[i] = empty;
        members[empty].push(i);
        let t = truncate_rank(&obs.matrix(i), rank)?;
        centroids[empty] = Some(row_major(&t));
    }
    Ok(centroids.into_iter().map(|c| c.unwrap()).collect())
}

pub fn lr_lloyd(obs: &ObservationSet, options: &LloydOptions) -> Result<LloydResult> {
    options.validate(obs)?;
    let k = options.k;
    let mut labels = match options.init {
        InitMode::RandomAssignment => {
            let mut rng = seeded_rng(options.seed);
            (0..obs.n()).map(|_| rng.random_range(0..k)).collect()
        }
        InitMode::Spectral => spectral_init(obs, k, options.rank, options.seed)?,
    };
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut centroids = update_centroids(obs, &mut labels, k, options.rank)?;
    trace.push(objective(obs, &labels, &centroids));
    while iterations < options.max_iter {
        iterations += 1;
        let next: Vec<usize> = (0..obs.n())
            .into_par_iter()
            .map(|i| nearest(obs.sample(i), &centroids).0)
            .collect();
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
        centroids = update_centroids(obs, &mut labels, k, options.rank)?;
        trace.push(objective(obs, &labels, &centroids));
    }
    Ok(LloydResult {
        labels,
        centroids,
        iterations,
        objective: trace,
        converged,
        init: options.init,
    })
}

/// Initial labels from k-means on the leading principal scores of the
/// `n x (d1 d2)` unfolding. `rank` is accepted for signature parity with
/// the tensor method and caps nothing here.
pub fn spectral_init(obs: &ObservationSet, k: usize, rank: usize, seed: u64) -> Result<Vec<usize>> {
    let _ = rank;
    if k == 0 || k > obs.n() {
        return Err(Error::InvalidArgument(format!(
            "K = {k} must lie in 1..={}",
            obs.n()
        )));
    }
    let dims = k.min(obs.dim());
    let scores = pca_embed(obs, dims)?;
    kmeans(&scores, k, seed)
}

/// Plain k-means with k-means++ seeding; every class ends nonempty.
fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = points.len();
    let mut rng = seeded_rng(seed);
    let dist = |a: &[f64], b: &[f64]| norm_sq(&sub(a, b));
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
    let mut chosen = vec![false; n];
    while centers.len() < k {
        let d: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| dist(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &di) in d.iter().enumerate() {
                if u < di {
                    idx = i;
                    break;
                }
                u -= di;
            }
            idx
        } else {
            (0..n).find(|&i| !chosen[i]).unwrap_or(0)
        };
        chosen[pick] = true;
        centers.push(points[pick].clone());
    }
    let mut labels = vec![usize::MAX; n];
    for _ in 0..300 {
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
        if next == labels {
            break;
        }
        labels = next;
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    // Fill any empty class with the point farthest from its center, taken
    // from a class that can spare it.
    loop {
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            break;
        };
        let donor = (0..n)
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| {
                dist(&points[a], &centers[labels[a]])
                    .total_cmp(&dist(&points[b], &centers[labels[b]]))
                    .then(b.cmp(&a))
            })
            .expect("k <= n leaves a class with two members");
        labels[donor] = empty;
        centers[empty] = points[donor].clone();
    }
    Ok(labels)
}

/// Centroid block of `result` for cluster `c` as a matrix.
pub fn centroid_matrix(result: &LloydResult, c: usize, d1: usize, d2: usize) -> DMatrix<f64> {
    block_to_matrix(&result.centroids[c], d1, d2)
}
