//! Partition agreement metrics and a PCA projection for plotting.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::ObservationSet;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    /// `counts[i][j]`: samples in class `i` of the first partition and class
    /// `j` of the second.
    pub counts: Vec<Vec<usize>>,
    pub row_sums: Vec<usize>,
    pub col_sums: Vec<usize>,
    pub n: usize,
}

fn relabel(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

impl ContingencyTable {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        let (ra, ka) = relabel(a);
        let (rb, kb) = relabel(b);
        let mut counts = vec![vec![0usize; kb]; ka];
        for (&i, &j) in ra.iter().zip(&rb) {
            counts[i][j] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..kb).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(ContingencyTable {
            counts,
            row_sums,
            col_sums,
            n: a.len(),
        })
    }
}

fn pairs(m: usize) -> f64 {
    let m = m as f64;
    m * (m - 1.0) / 2.0
}

/// Adjusted Rand index (Hubert and Arabie).
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(a, b)?;
    let index: f64 = t.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let sa: f64 = t.row_sums.iter().map(|&c| pairs(c)).sum();
    let sb: f64 = t.col_sums.iter().map(|&c| pairs(c)).sum();
    let total = pairs(t.n);
    let expected = if total > 0.0 { sa * sb / total } else { 0.0 };
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

fn entropy(sums: &[usize], n: f64) -> f64 {
    sums.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information, `2 I / (H_a + H_b)` in nats.
///
/// A single-cluster partition has zero entropy; the score is 0 against any
/// other partition and 1 when both partitions are single clusters.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(a, b)?;
    if t.n == 0 {
        return Ok(1.0);
    }
    let n = t.n as f64;
    let ha = entropy(&t.row_sums, n);
    let hb = entropy(&t.col_sums, n);
    if t.row_sums.len() == 1 && t.col_sums.len() == 1 {
        return Ok(1.0);
    }
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let pij = c as f64 / n;
            mi += pij * (c as f64 * n / (t.row_sums[i] as f64 * t.col_sums[j] as f64)).ln();
        }
    }
    Ok((2.0 * mi / (ha + hb)).clamp(0.0, 1.0))
}

/// Top principal directions of the vectorized, centered samples as columns
/// of a `d x dims` matrix, plus the sample mean. Each direction is signed so
/// its largest-magnitude loading is positive.
pub fn principal_directions(obs: &ObservationSet, dims: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let d = obs.dim();
    if dims == 0 || dims > d {
        return Err(Error::InvalidArgument(format!("dims = {dims} must lie in 1..={d}")));
    }
    let n = obs.n();
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(obs.sample(i)) {
            *m += v / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d, |i, j| obs.sample(i)[j] - mean[j]);
    let cov = centered.transpose() * &centered;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]).then(x.cmp(&y)));
    let mut dirs = DMatrix::zeros(d, dims);
    for (c, &k) in order.iter().take(dims).enumerate() {
        let mut col = eig.eigenvectors.column(k).into_owned();
        let lead = col.iter().cloned().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if lead < 0.0 {
            col.neg_mut();
        }
        dirs.set_column(c, &col);
    }
    Ok((dirs, mean))
}

/// Coordinates of each sample on the top `dims` principal directions.
pub fn pca_embed(obs: &ObservationSet, dims: usize) -> Result<Vec<Vec<f64>>> {
    let (dirs, mean) = principal_directions(obs, dims)?;
    Ok((0..obs.n())
        .map(|i| {
            (0..dims)
                .map(|c| {
                    obs.sample(i)
                        .iter()
                        .zip(&mean)
                        .zip(dirs.column(c).iter())
                        .map(|((v, m), u)| (v - m) * u)
                        .sum()
                })
                .collect()
        })
        .collect())
}
