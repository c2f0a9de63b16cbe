use serde::{Deserialize, Serialize};

use super::problem::{primal_objective, PrimalDualState, ProblemSpec};
use crate::error::{Error, Result};
use crate::graph::connected_components;
use crate::linalg::{self, block_to_matrix};

/// Pairs are compared exhaustively up to this many samples, and only along
/// graph edges beyond it.
pub const ALL_PAIRS_LIMIT: usize = 2000;

const RANK_REL_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub labels: Vec<usize>,
    /// Row-major `d1 x d2` centroid per cluster.
    pub centroids: Vec<Vec<f64>>,
    pub ranks: Vec<usize>,
    pub objective: f64,
    pub d1: usize,
    pub d2: usize,
}

impl ClusteringResult {
    pub fn num_clusters(&self) -> usize {
        self.centroids.len()
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let diff = linalg::norm(&linalg::sub(a, b));
    diff <= tol * (1.0 + linalg::norm(a).max(linalg::norm(b)))
}

pub fn extract_clusters(spec: &ProblemSpec, state: &PrimalDualState, tol: f64) -> Result<ClusteringResult> {
    state.check(spec)?;
    if let Some(index) = state.x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("merge tolerance {tol} must be >= 0")));
    }
    let n = spec.n();
    let d = spec.d();
    let block = |i: usize| &state.x[i * d..(i + 1) * d];
    let mut pairs = Vec::new();
    for &(i, j) in spec.graph().edges() {
        if close(block(i), block(j), tol) {
            pairs.push((i, j));
        }
    }
    if n <= ALL_PAIRS_LIMIT {
        for i in 0..n {
            for j in i + 1..n {
                if close(block(i), block(j), tol) {
                    pairs.push((i, j));
                }
            }
        }
    }
    let comps = connected_components(n, &pairs)?;
    let k = comps.count;
    let mut centroids = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (i, &c) in comps.labels.iter().enumerate() {
        linalg::axpy(1.0, block(i), &mut centroids[c]);
        counts[c] += 1;
    }
    let mut ranks = Vec::with_capacity(k);
    for (c, cnt) in centroids.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|v| *v /= *cnt as f64);
        ranks.push(linalg::numerical_rank(
            &block_to_matrix(c, spec.d1(), spec.d2()),
            RANK_REL_TOL,
        )?);
    }
    Ok(ClusteringResult {
        labels: comps.labels,
        centroids,
        ranks,
        objective: primal_objective(spec, &state.x)?,
        d1: spec.d1(),
        d2: spec.d2(),
    })
}
