//! Matrix-valued observations, label vectors, file formats and synthetic
//! generators.
//!
//! The MTS1 binary layout is: the four bytes `MTS1`, then `n`, `d1`, `d2` as
//! little-endian `u32`, then `n * d1 * d2` little-endian `f64` values, one
//! matrix after another, each row-major.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, block_to_matrix, matrix_to_block};

pub const MTS_MAGIC: &[u8; 4] = b"MTS1";
const MTS_HEADER_LEN: usize = 16;

/// Identifier of the pseudo-random stream used by every generator.
pub const RNG_ALGORITHM: &str = "chacha8";

/// Seeded generator used throughout the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, d1: usize, d2: usize) -> DMatrix<f64> {
    // Filled row by row so the stream order matches the row-major layout.
    let data: Vec<f64> = (0..d1 * d2).map(|_| gaussian(rng)).collect();
    DMatrix::from_row_slice(d1, d2, &data)
}

/// `n` matrices of shape `d1 x d2`, stored contiguously and row-major.
///
/// Construction normalizes orientation so that `d1 >= d2`; when the input had
/// `d1 < d2` every matrix is transposed and `transposed` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    n: usize,
    d1: usize,
    d2: usize,
    data: Vec<f64>,
    transposed: bool,
}

impl ObservationSet {
    pub fn new(n: usize, d1: usize, d2: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("observation set must be nonempty".into()));
        }
        if d1 == 0 || d2 == 0 {
            return Err(Error::Dimension(format!("matrix shape {d1}x{d2} has a zero side")));
        }
        linalg::check_len(n * d1 * d2, data.len())?;
        if let Some(index) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if d1 >= d2 {
            return Ok(ObservationSet {
                n,
                d1,
                d2,
                data,
                transposed: false,
            });
        }
        let block = d1 * d2;
        let mut out = vec![0.0; data.len()];
        for i in 0..n {
            let src = &data[i * block..(i + 1) * block];
            let dst = &mut out[i * block..(i + 1) * block];
            for r in 0..d1 {
                for c in 0..d2 {
                    dst[c * d1 + r] = src[r * d2 + c];
                }
            }
        }
        Ok(ObservationSet {
            n,
            d1: d2,
            d2: d1,
            data: out,
            transposed: true,
        })
    }

    pub fn from_matrices(mats: &[DMatrix<f64>]) -> Result<Self> {
        let first = mats
            .first()
            .ok_or_else(|| Error::InvalidArgument("observation set must be nonempty".into()))?;
        let (d1, d2) = first.shape();
        let mut data = vec![0.0; mats.len() * d1 * d2];
        for (i, m) in mats.iter().enumerate() {
            if m.shape() != (d1, d2) {
                return Err(Error::Dimension(format!(
                    "matrix {i} has shape {:?}, expected {:?}",
                    m.shape(),
                    (d1, d2)
                )));
            }
            matrix_to_block(m, &mut data[i * d1 * d2..(i + 1) * d1 * d2]);
        }
        ObservationSet::new(mats.len(), d1, d2, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    /// Entries per sample, `d1 * d2`.
    pub fn dim(&self) -> usize {
        self.d1 * self.d2
    }

    pub fn transposed(&self) -> bool {
        self.transposed
    }

    /// The stacked vector of all samples.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn matrix(&self, i: usize) -> DMatrix<f64> {
        block_to_matrix(self.sample(i), self.d1, self.d2)
    }

    pub fn squared_distance(&self, i: usize, j: usize) -> f64 {
        self.sample(i)
            .iter()
            .zip(self.sample(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Cluster labels in `0..k`, every class nonempty.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    labels: Vec<usize>,
    k: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument("label vector must be nonempty".into()));
        }
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; k];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!(
                "label class {missing} is empty (labels must cover 0..{k})"
            )));
        }
        Ok(LabelVector { labels, k })
    }

    /// Relabels arbitrary integer ids to `0..k` in order of first appearance.
    pub fn from_raw(raw: &[i64]) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|r| {
                let next = map.len();
                *map.entry(*r).or_insert(next)
            })
            .collect();
        LabelVector::new(labels)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Member indices of each class.
    pub fn classes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

/// Parameters of the low-rank mixture `A_i = M_{s_i} + E_i`.
#[derive(Clone, Debug)]
pub struct MixtureSpec {
    pub means: Vec<DMatrix<f64>>,
    pub weights: Vec<f64>,
    pub sigma: f64,
    pub ranks: Vec<usize>,
}

impl MixtureSpec {
    pub fn k(&self) -> usize {
        self.means.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.means.len();
        if k == 0 {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        if self.weights.len() != k || self.ranks.len() != k {
            return Err(Error::InvalidArgument(format!(
                "mixture has {k} means but {} weights and {} ranks",
                self.weights.len(),
                self.ranks.len()
            )));
        }
        if self.weights.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidArgument("mixture weights must be nonnegative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("noise scale {} must be >= 0", self.sigma)));
        }
        let shape = self.means[0].shape();
        for (alpha, m) in self.means.iter().enumerate() {
            if m.shape() != shape {
                return Err(Error::Dimension(format!(
                    "mean {alpha} has shape {:?}, expected {:?}",
                    m.shape(),
                    shape
                )));
            }
            let rank = linalg::numerical_rank(m, 1e-10)?;
            if rank > self.ranks[alpha] {
                return Err(Error::InvalidArgument(format!(
                    "mean {alpha} has rank {rank} above its target {}",
                    self.ranks[alpha]
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// File formats

pub fn save_mts(obs: &ObservationSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(MTS_HEADER_LEN + obs.data.len() * 8);
    buf.extend_from_slice(MTS_MAGIC);
    for v in [obs.n, obs.d1, obs.d2] {
        let v = u32::try_from(v)
            .map_err(|_| Error::Dimension(format!("{v} does not fit the MTS1 header")))?;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for x in &obs.data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_mts(path: impl AsRef<Path>) -> Result<ObservationSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 || &bytes[..4] != MTS_MAGIC {
        return Err(Error::BadMagic { path: path.into() });
    }
    if bytes.len() < MTS_HEADER_LEN {
        return Err(Error::TruncatedPayload {
            path: path.into(),
            expected: MTS_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let word = |k: usize| {
        let start = 4 + 4 * k;
        u32::from_le_bytes(bytes[start..start + 4].try_into().unwrap()) as usize
    };
    let (n, d1, d2) = (word(0), word(1), word(2));
    let count = n * d1 * d2;
    let expected = MTS_HEADER_LEN + 8 * count;
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload {
            path: path.into(),
            expected,
            found: bytes.len(),
        });
    }
    let data: Vec<f64> = bytes[MTS_HEADER_LEN..expected]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ObservationSet::new(n, d1, d2, data)
}

/// One sample per line: `d1 * d2` comma-separated reals, row-major.
pub fn load_csv(path: impl AsRef<Path>, d1: usize, d2: usize) -> Result<ObservationSet> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let width = d1 * d2;
    let mut data = Vec::new();
    let mut n = 0;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != width {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        for f in fields {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                line: idx + 1,
                message: format!("cannot parse {f:?} as a number"),
            })?;
            data.push(v);
        }
        n += 1;
    }
    ObservationSet::new(n, d1, d2, data)
}

pub fn save_labels(labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads one base-10 integer per line and relabels to `0..k`.
pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut raw = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        raw.push(t.parse::<i64>().map_err(|_| Error::Parse {
            line: idx + 1,
            message: format!("cannot parse {t:?} as an integer label"),
        })?);
    }
    LabelVector::from_raw(&raw)
}

/// Writes the stacked data as a numeric text file usable by `std::io::Write`.
pub fn write_csv_rows<W: Write>(mut w: W, rows: &[Vec<f64>]) -> std::io::Result<()> {
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Generators

/// Top-`r` left and right singular factors of a seeded Gaussian `d1 x d2` matrix.
pub fn random_singular_factors<R: Rng + ?Sized>(
    rng: &mut R,
    d1: usize,
    d2: usize,
    r: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if r > d1.min(d2) {
        return Err(Error::Dimension(format!("rank {r} exceeds min({d1}, {d2})")));
    }
    let g = gaussian_matrix(rng, d1, d2);
    let svd = linalg::thin_svd(g)?;
    Ok((svd.u.columns(0, r).into_owned(), svd.v.columns(0, r).into_owned()))
}

fn factor_product(u: &DMatrix<f64>, s: &[f64], v: &DMatrix<f64>) -> DMatrix<f64> {
    u * DMatrix::from_diagonal(&DVector::from_row_slice(s)) * v.transpose()
}

/// Singular-value vector of the first quarter-sphere cluster.
pub fn quarter_sphere_point(theta: f64, vartheta: f64) -> [f64; 3] {
    [
        vartheta.sin() * theta.cos(),
        vartheta.sin() * theta.sin(),
        vartheta.cos(),
    ]
}

/// Singular-value vector of the second cluster: the first one reflected and
/// translated.
pub fn reflected_quarter_sphere_point(theta: f64, vartheta: f64) -> [f64; 3] {
    [
        1.0 + vartheta.sin() * theta.cos(),
        0.5 - vartheta.sin() * theta.sin(),
        0.5 - vartheta.cos(),
    ]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuarterSphereParams {
    pub n_per_cluster: usize,
    pub d1: usize,
    pub d2: usize,
    pub noise: f64,
    /// Reuse the first cluster's singular factors for the second cluster.
    pub share_factors: bool,
}

impl QuarterSphereParams {
    pub fn new(n_per_cluster: usize, d1: usize, d2: usize, noise: f64) -> Self {
        QuarterSphereParams {
            n_per_cluster,
            d1,
            d2,
            noise,
            share_factors: false,
        }
    }
}

/// Two interleaved quarter-spheres of singular-value vectors embedded with
/// rank-3 factors. Labels are `0` for the first `n_per_cluster` samples and
/// `1` for the rest.
pub fn gen_quarter_spheres(
    params: &QuarterSphereParams,
    seed: u64,
) -> Result<(ObservationSet, LabelVector)> {
    let &QuarterSphereParams {
        n_per_cluster,
        d1,
        d2,
        noise,
        share_factors,
    } = params;
    if d1 < 3 || d2 < 3 {
        return Err(Error::Dimension(format!(
            "quarter-sphere data needs d1, d2 >= 3, got {d1}x{d2}"
        )));
    }
    if n_per_cluster == 0 {
        return Err(Error::InvalidArgument("n_per_cluster must be >= 1".into()));
    }
    let mut rng = seeded_rng(seed);
    let (u1, v1) = random_singular_factors(&mut rng, d1, d2, 3)?;
    let (u2, v2) = if share_factors {
        (u1.clone(), v1.clone())
    } else {
        random_singular_factors(&mut rng, d1, d2, 3)?
    };
    let mut mats = Vec::with_capacity(2 * n_per_cluster);
    let mut labels = Vec::with_capacity(2 * n_per_cluster);
    for (cluster, (u, v)) in [(&u1, &v1), (&u2, &v2)].into_iter().enumerate() {
        for _ in 0..n_per_cluster {
            let theta = rng.random_range(0.0..=PI);
            let vartheta = rng.random_range(0.0..=PI / 2.0);
            let base = if cluster == 0 {
                quarter_sphere_point(theta, vartheta)
            } else {
                reflected_quarter_sphere_point(theta, vartheta)
            };
            let s: Vec<f64> = base.iter().map(|b| b + noise * gaussian(&mut rng)).collect();
            mats.push(factor_product(u, &s, v));
            labels.push(cluster);
        }
    }
    Ok((ObservationSet::from_matrices(&mats)?, LabelVector::new(labels)?))
}

/// Centroid singular values of the unbalanced Gaussian data; column `i` holds
/// the two singular values of cluster `i`.
pub const UNBALANCED_SINGULAR_VALUES: [[f64; 8]; 2] = [
    [0.02, 0.09, 0.16, 0.70, 0.70, 0.80, 0.90, 0.90],
    [0.48, 0.55, 0.48, 0.36, 0.60, 0.48, 0.36, 0.60],
];

/// Cluster sizes of the full-scale unbalanced experiment.
pub const UNBALANCED_PAPER_SIZES: [usize; 8] = [2000, 2000, 2000, 100, 100, 100, 100, 100];

/// Rank-2 centroids for the unbalanced data, one per cluster.
pub fn unbalanced_centroids<R: Rng + ?Sized>(
    rng: &mut R,
    d1: usize,
    d2: usize,
) -> Result<Vec<DMatrix<f64>>> {
    (0..8)
        .map(|i| {
            let (u, v) = random_singular_factors(rng, d1, d2, 2)?;
            let s = [UNBALANCED_SINGULAR_VALUES[0][i], UNBALANCED_SINGULAR_VALUES[1][i]];
            Ok(factor_product(&u, &s, &v))
        })
        .collect()
}

/// Eight rank-2 Gaussian clusters of the given sizes, samples ordered by cluster.
pub fn gen_unbalanced_gaussian(
    sizes: &[usize; 8],
    d1: usize,
    d2: usize,
    noise: f64,
    seed: u64,
) -> Result<(ObservationSet, LabelVector)> {
    if d1 < 2 || d2 < 2 {
        return Err(Error::Dimension(format!(
            "unbalanced data needs d1, d2 >= 2, got {d1}x{d2}"
        )));
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidArgument("every cluster size must be >= 1".into()));
    }
    let mut rng = seeded_rng(seed);
    let centroids = unbalanced_centroids(&mut rng, d1, d2)?;
    let mut mats = Vec::new();
    let mut labels = Vec::new();
    for (alpha, (&size, m)) in sizes.iter().zip(&centroids).enumerate() {
        for _ in 0..size {
            mats.push(m + noise * gaussian_matrix(&mut rng, d1, d2));
            labels.push(alpha);
        }
    }
    Ok((ObservationSet::from_matrices(&mats)?, LabelVector::new(labels)?))
}

/// Random low-rank means `U diag(c) V^T` with `c ~ N(0, 1)` and factors taken
/// from seeded Gaussian matrices.
pub fn random_low_rank_means<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    rank: usize,
    d1: usize,
    d2: usize,
) -> Result<Vec<DMatrix<f64>>> {
    (0..k)
        .map(|_| {
            let (u, v) = random_singular_factors(rng, d1, d2, rank)?;
            let c: Vec<f64> = (0..rank).map(|_| gaussian(rng)).collect();
            Ok(factor_product(&u, &c, &v))
        })
        .collect()
}

/// Low-rank mixture with labels drawn i.i.d. from the mixture weights.
pub fn gen_low_rank_mixture(
    spec: &MixtureSpec,
    n: usize,
    seed: u64,
) -> Result<(ObservationSet, LabelVector)> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    let mut rng = seeded_rng(seed);
    let (d1, d2) = spec.means[0].shape();
    let mut cumulative = Vec::with_capacity(spec.k());
    let mut acc = 0.0;
    for &p in &spec.weights {
        acc += p;
        cumulative.push(acc);
    }
    let mut mats = Vec::with_capacity(n);
    let mut raw = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * acc;
        let alpha = cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or_else(|| spec.weights.iter().rposition(|&p| p > 0.0).unwrap());
        mats.push(&spec.means[alpha] + spec.sigma * gaussian_matrix(&mut rng, d1, d2));
        raw.push(alpha);
    }
    // Labels keep the component index; classes that were never drawn are
    // compacted so the label vector stays valid.
    let raw_i: Vec<i64> = raw.iter().map(|&a| a as i64).collect();
    let labels = if (0..spec.k()).all(|a| raw.contains(&a)) {
        LabelVector::new(raw)?
    } else {
        compact_labels(&raw_i)?
    };
    Ok((ObservationSet::from_matrices(&mats)?, labels))
}

fn compact_labels(raw: &[i64]) -> Result<LabelVector> {
    let mut present: Vec<i64> = raw.to_vec();
    present.sort_unstable();
    present.dedup();
    let labels = raw
        .iter()
        .map(|r| present.binary_search(r).unwrap())
        .collect();
    LabelVector::new(labels)
}

/// Balanced mixture: exactly `n_per_cluster` samples from each component,
/// ordered by component.
pub fn gen_balanced_mixture(
    spec: &MixtureSpec,
    n_per_cluster: usize,
    seed: u64,
) -> Result<(ObservationSet, LabelVector)> {
    spec.validate()?;
    if n_per_cluster == 0 {
        return Err(Error::InvalidArgument("n_per_cluster must be >= 1".into()));
    }
    let mut rng = seeded_rng(seed);
    let (d1, d2) = spec.means[0].shape();
    let mut mats = Vec::new();
    let mut labels = Vec::new();
    for (alpha, m) in spec.means.iter().enumerate() {
        for _ in 0..n_per_cluster {
            mats.push(m + spec.sigma * gaussian_matrix(&mut rng, d1, d2));
            labels.push(alpha);
        }
    }
    Ok((ObservationSet::from_matrices(&mats)?, LabelVector::new(labels)?))
}

/// The four-cluster recovery experiment: `k` rank-`rank` means with standard
/// normal singular values, `n_per_cluster` samples each, noise scale `noise`.
/// Returns the data, labels and the true means.
pub fn gen_recovery_recipe(
    k: usize,
    rank: usize,
    d1: usize,
    d2: usize,
    n_per_cluster: usize,
    noise: f64,
    seed: u64,
) -> Result<(ObservationSet, LabelVector, Vec<DMatrix<f64>>)> {
    let mut rng = seeded_rng(seed);
    let means = random_low_rank_means(&mut rng, k, rank, d1, d2)?;
    let spec = MixtureSpec {
        weights: vec![1.0 / k as f64; k],
        ranks: vec![rank; k],
        sigma: noise,
        means,
    };
    // The sample stream is derived from the seed but kept separate from the
    // stream that drew the means.
    let (obs, labels) = gen_balanced_mixture(&spec, n_per_cluster, seed.wrapping_add(0x9e37_79b9))?;
    Ok((obs, labels, spec.means))
}
