//! Recovery diagnostics and prediction-error bounds for a concrete instance.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{LabelVector, ObservationSet};
use crate::error::{Error, Result};
use crate::graph::{connected_components, sigma_min_b, WeightedGraph};
use crate::linalg::{self, block_to_matrix};

/// Per-class means of the observations, each as a row-major block.
pub fn cluster_means(obs: &ObservationSet, labels: &LabelVector) -> Result<Vec<Vec<f64>>> {
    if labels.len() != obs.n() {
        return Err(Error::LengthMismatch {
            expected: obs.n(),
            got: labels.len(),
        });
    }
    let d = obs.dim();
    let mut sums = vec![vec![0.0; d]; labels.k()];
    let mut counts = vec![0usize; labels.k()];
    for (i, &c) in labels.labels().iter().enumerate() {
        linalg::axpy(1.0, obs.sample(i), &mut sums[c]);
        counts[c] += 1;
    }
    for (c, (s, &cnt)) in sums.iter_mut().zip(&counts).enumerate() {
        if cnt == 0 {
            return Err(Error::InvalidArgument(format!("class {c} is empty")));
        }
        s.iter_mut().for_each(|v| *v /= cnt as f64);
    }
    Ok(sums)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    Perfect,
    MergeOnly,
    DistinguishOnly,
    Neither,
}

impl Region {
    pub fn from_flags(b: bool, c: bool) -> Self {
        match (b, c) {
            (true, true) => Region::Perfect,
            (true, false) => Region::MergeOnly,
            (false, true) => Region::DistinguishOnly,
            (false, false) => Region::Neither,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Region::Perfect => "perfect",
            Region::MergeOnly => "merge-only",
            Region::DistinguishOnly => "distinguish-only",
            Region::Neither => "neither",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusterDiagnostics {
    pub size: usize,
    pub clique: bool,
    pub eta_max: f64,
    /// Pair attaining `eta_max`, if the class has at least two members.
    pub eta_argmax: Option<(usize, usize)>,
    /// `max ||A_i - A_j|| / (w_ij (|I| - eta_ij))` over the class, infinite if
    /// the class is not a clique or some `eta_ij >= |I|`.
    pub gamma1_min: f64,
    pub cross_weight: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub means: Vec<Vec<f64>>,
    pub d1: usize,
    pub d2: usize,
    /// Smallest distance between class means; `None` for a single class.
    pub delta: Option<f64>,
    pub means_distinct: bool,
    pub clusters: Vec<ClusterDiagnostics>,
    pub gamma1_min: f64,
    pub w_max: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub cond_a: bool,
    pub cond_b: bool,
    pub cond_c: bool,
    pub region: Region,
}

impl RecoveryReport {
    /// Largest `gamma2` satisfying condition (c) at `gamma1 = 0`, i.e. the
    /// intercept of the line `gamma1 w_max + gamma2 sqrt(d2) = Delta`.
    pub fn gamma2_intercept(&self) -> Option<f64> {
        self.delta.map(|d| d / (self.d2 as f64).sqrt())
    }

    /// Intercept of the same line on the `gamma1` axis.
    pub fn gamma1_intercept(&self) -> Option<f64> {
        self.delta.map(|d| if self.w_max > 0.0 { d / self.w_max } else { f64::INFINITY })
    }

    fn flags(&self, gamma1: f64, gamma2: f64) -> (bool, bool) {
        let b = self.gamma1_min.is_finite() && gamma1 >= self.gamma1_min;
        let c = match self.delta {
            None => true,
            Some(delta) => {
                self.means_distinct && gamma1 * self.w_max + gamma2 * (self.d2 as f64).sqrt() < delta
            }
        };
        (b, c)
    }

    /// Same report re-evaluated at another `(gamma1, gamma2)`.
    pub fn at(&self, gamma1: f64, gamma2: f64) -> RecoveryReport {
        let (b, c) = self.flags(gamma1, gamma2);
        RecoveryReport {
            gamma1,
            gamma2,
            cond_b: b,
            cond_c: c,
            region: Region::from_flags(b, c),
            ..self.clone()
        }
    }
}

pub fn region_classify(report: &RecoveryReport, gamma1: f64, gamma2: f64) -> Region {
    let (b, c) = report.flags(gamma1, gamma2);
    Region::from_flags(b, c)
}

/// Sparse symmetric weight lookup; absent edges weigh zero.
struct Adjacency {
    nbrs: Vec<HashMap<usize, f64>>,
}

impl Adjacency {
    fn new(graph: &WeightedGraph) -> Self {
        let mut nbrs = vec![HashMap::new(); graph.n()];
        for (&(i, j), &w) in graph.edges().iter().zip(graph.weights()) {
            nbrs[i].insert(j, w);
            nbrs[j].insert(i, w);
        }
        Adjacency { nbrs }
    }

    fn weight(&self, i: usize, j: usize) -> f64 {
        self.nbrs[i].get(&j).copied().unwrap_or(0.0)
    }

    /// `sum_{m not in set} |w_im - w_jm|`
    fn outside_difference(&self, i: usize, j: usize, inside: &[bool]) -> f64 {
        let mut total = 0.0;
        for (&m, &w) in &self.nbrs[i] {
            if !inside[m] {
                total += (w - self.weight(j, m)).abs();
            }
        }
        for (&m, &w) in &self.nbrs[j] {
            if !inside[m] && !self.nbrs[i].contains_key(&m) {
                total += w;
            }
        }
        total
    }
}

/// Sums `S[i][beta] = sum_{m in I_beta} w_im` from the edge list.
fn class_weight_sums(graph: &WeightedGraph, labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut s = vec![vec![0.0; k]; graph.n()];
    for (&(i, j), &w) in graph.edges().iter().zip(graph.weights()) {
        s[i][labels[j]] += w;
        s[j][labels[i]] += w;
    }
    s
}

/// `eta_ij^(alpha)` for every pair in class `alpha`, as `(i, j, eta)` with
/// `i < j`. Pairs without an edge get an infinite value.
pub fn eta_pairs(graph: &WeightedGraph, labels: &LabelVector, alpha: usize) -> Result<Vec<(usize, usize, f64)>> {
    if labels.len() != graph.n() {
        return Err(Error::LengthMismatch {
            expected: graph.n(),
            got: labels.len(),
        });
    }
    let adj = Adjacency::new(graph);
    let s = class_weight_sums(graph, labels.labels(), labels.k());
    let members: Vec<usize> = (0..graph.n()).filter(|&i| labels.labels()[i] == alpha).collect();
    let mut out = Vec::new();
    for (p, &i) in members.iter().enumerate() {
        for &j in &members[p + 1..] {
            out.push((i, j, eta_value(&s, &adj, i, j, alpha)));
        }
    }
    Ok(out)
}

fn eta_value(s: &[Vec<f64>], adj: &Adjacency, i: usize, j: usize, alpha: usize) -> f64 {
    let wij = adj.weight(i, j);
    if wij <= 0.0 {
        return f64::INFINITY;
    }
    let total: f64 = (0..s[i].len())
        .filter(|&b| b != alpha)
        .map(|b| (s[i][b] - s[j][b]).abs())
        .sum();
    total / wij
}

pub fn recovery_check(
    obs: &ObservationSet,
    labels: &LabelVector,
    graph: &WeightedGraph,
    gamma1: f64,
    gamma2: f64,
) -> Result<RecoveryReport> {
    if graph.n() != obs.n() {
        return Err(Error::Dimension(format!(
            "graph has {} nodes but there are {} samples",
            graph.n(),
            obs.n()
        )));
    }
    let means = cluster_means(obs, labels)?;
    let k = labels.k();
    let lab = labels.labels();
    let adj = Adjacency::new(graph);
    let s = class_weight_sums(graph, lab, k);
    let classes = labels.classes();

    let mut clusters = Vec::with_capacity(k);
    for (alpha, members) in classes.iter().enumerate() {
        let size = members.len();
        let mut clique = true;
        let mut eta_max: f64 = 0.0;
        let mut eta_argmax = None;
        let mut g1min: f64 = 0.0;
        for (p, &i) in members.iter().enumerate() {
            for &j in &members[p + 1..] {
                let wij = adj.weight(i, j);
                if wij <= 0.0 {
                    clique = false;
                    continue;
                }
                let eta = eta_value(&s, &adj, i, j, alpha);
                if eta_argmax.is_none() || eta > eta_max {
                    eta_max = eta;
                    eta_argmax = Some((i, j));
                }
                let slack = size as f64 - eta;
                let bound = if slack > 0.0 {
                    obs.squared_distance(i, j).sqrt() / (wij * slack)
                } else {
                    f64::INFINITY
                };
                g1min = g1min.max(bound);
            }
        }
        if !clique {
            g1min = f64::INFINITY;
            eta_max = f64::INFINITY;
        }
        let cross_weight: f64 = members
            .iter()
            .map(|&i| (0..k).filter(|&b| b != alpha).map(|b| s[i][b]).sum::<f64>())
            .sum();
        clusters.push(ClusterDiagnostics {
            size,
            clique,
            eta_max,
            eta_argmax,
            gamma1_min: g1min,
            cross_weight,
        });
    }

    let mut delta: Option<f64> = None;
    for a in 0..k {
        for b in a + 1..k {
            let dist = linalg::norm(&linalg::sub(&means[a], &means[b]));
            delta = Some(delta.map_or(dist, |d| d.min(dist)));
        }
    }
    let means_distinct = delta.is_none_or(|d| d > 0.0);
    let w_max = clusters
        .iter()
        .map(|c| 2.0 * c.cross_weight / c.size as f64)
        .fold(0.0, f64::max);
    let gamma1_min = clusters.iter().map(|c| c.gamma1_min).fold(0.0, f64::max);
    let cond_a = clusters.iter().all(|c| c.clique && c.eta_max < c.size as f64);

    let base = RecoveryReport {
        means,
        d1: obs.d1(),
        d2: obs.d2(),
        delta,
        means_distinct,
        clusters,
        gamma1_min,
        w_max,
        gamma1,
        gamma2,
        cond_a,
        cond_b: false,
        cond_c: false,
        region: Region::Neither,
    };
    Ok(base.at(gamma1, gamma2))
}

// --- chi distribution -------------------------------------------------------

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln(1 + u) - u`, accurate for small `u`.
fn log1pmx(u: f64) -> f64 {
    if u.abs() < 0.25 {
        // -u^2/2 + u^3/3 - ...
        let mut term = -u;
        let mut sum = 0.0;
        let mut k = 2.0;
        loop {
            term *= -u;
            let add = term / k;
            sum += add;
            if add.abs() <= 1e-17 * sum.abs() {
                break;
            }
            k += 1.0;
        }
        -sum
    } else {
        u.ln_1p() - u
    }
}

/// `ln Gamma(a) - [(a - 1/2) ln a - a + ln sqrt(2 pi)]` for `a` a positive
/// multiple of 1/2.
fn stirlerr_half_integer(a: f64) -> f64 {
    if a >= 15.0 {
        let a2 = a * a;
        let s = 1.0 / 12.0
            - (1.0 / 360.0 - (1.0 / 1260.0 - (1.0 / 1680.0 - 1.0 / (1188.0 * a2)) / a2) / a2) / a2;
        return s / a;
    }
    // Gamma(a) exactly by recurrence from Gamma(1) or Gamma(1/2).
    let mut g = if (a - a.floor()).abs() < 1e-12 { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut x = if (a - a.floor()).abs() < 1e-12 { 1.0 } else { 0.5 };
    while x < a - 1e-9 {
        g *= x;
        x += 1.0;
    }
    g.ln() - ((a - 0.5) * a.ln() - a + LN_SQRT_2PI)
}

/// Regularized lower incomplete gamma `P(a, x)` for `a` a positive multiple
/// of 1/2.
fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    // x^a e^{-x} / Gamma(a)
    let pref = (a * log1pmx(x / a - 1.0) - stirlerr_half_integer(a)).exp() * (a / (2.0 * std::f64::consts::PI)).sqrt();
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut n = 1.0;
        while n < 1e7 {
            term *= x / (a + n);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
            n += 1.0;
        }
        (pref * sum).min(1.0)
    } else {
        // Lentz evaluation of the continued fraction for Q(a, x).
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        let mut i = 1.0;
        while i < 1e7 {
            let an = -i * (i - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
            i += 1.0;
        }
        (1.0 - pref * h).max(0.0)
    }
}

/// CDF of the chi distribution with `d` degrees of freedom.
pub fn chi_cdf(t: f64, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidArgument("chi distribution needs d >= 1".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t = {t} must be >= 0")));
    }
    if t.is_infinite() {
        return Ok(1.0);
    }
    Ok(regularized_gamma_p(d as f64 / 2.0, t * t / 2.0))
}

// --- asymptotic recovery ----------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AsymptoticCluster {
    pub members: Vec<usize>,
    pub pi_hat: f64,
    pub clique: bool,
    pub eta_max: f64,
    /// Right side of (a1): `(F pi - eps) n`.
    pub capacity: f64,
    pub cond_a1: bool,
    /// Smallest `gamma1` allowed by (b1).
    pub gamma1_bound: f64,
    pub cond_b1: bool,
    pub prob_merge: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AsymptoticPair {
    pub alpha: usize,
    pub beta: usize,
    pub half_gap: f64,
    pub cond_c1: bool,
    pub prob_distinguish: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub t: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub chi_cdf: f64,
    pub w_tilde_max: f64,
    pub clusters: Vec<AsymptoticCluster>,
    pub pairs: Vec<AsymptoticPair>,
    pub note: String,
}

/// Diagnostics for the large-sample recovery conditions. `labels` supply the
/// empirical frequencies; memberships of the `t sigma` balls are computed
/// against the supplied means.
#[allow(clippy::too_many_arguments)]
pub fn asymptotic_check(
    obs: &ObservationSet,
    labels: &LabelVector,
    means: &[Vec<f64>],
    sigma: f64,
    graph: &WeightedGraph,
    t: f64,
    epsilon: f64,
    gamma1: f64,
    gamma2: f64,
) -> Result<AsymptoticReport> {
    let n = obs.n();
    let d = obs.dim();
    if labels.len() != n || graph.n() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: labels.len().min(graph.n()),
        });
    }
    if means.iter().any(|m| m.len() != d) {
        return Err(Error::Dimension("mean shape differs from samples".into()));
    }
    if means.len() != labels.k() {
        return Err(Error::Dimension(format!(
            "{} means for {} classes",
            means.len(),
            labels.k()
        )));
    }
    if !(sigma > 0.0 && t > 0.0) {
        return Err(Error::InvalidArgument("sigma and t must be positive".into()));
    }
    let f = chi_cdf(t, d)?;
    let mut counts = vec![0usize; labels.k()];
    for &c in labels.labels() {
        counts[c] += 1;
    }
    let pi_hat: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let pi_min = pi_hat.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(epsilon > 0.0 && epsilon < f * pi_min) {
        return Err(Error::InvalidArgument(format!(
            "epsilon = {epsilon} must lie in (0, {})",
            f * pi_min
        )));
    }
    let adj = Adjacency::new(graph);
    let w_tilde_max = graph.weights().iter().cloned().fold(0.0, f64::max);
    let nf = n as f64;
    let fail = (-2.0 * epsilon * epsilon * nf).exp();

    let mut clusters = Vec::with_capacity(means.len());
    for (alpha, m) in means.iter().enumerate() {
        let radius = t * sigma;
        let members: Vec<usize> = (0..n)
            .filter(|&i| linalg::norm(&linalg::sub(obs.sample(i), m)) <= radius)
            .collect();
        let mut inside = vec![false; n];
        members.iter().for_each(|&i| inside[i] = true);
        let capacity = (f * pi_hat[alpha] - epsilon) * nf;
        let mut clique = true;
        let mut eta_max: f64 = 0.0;
        let mut bound: f64 = 0.0;
        for (p, &i) in members.iter().enumerate() {
            for &j in &members[p + 1..] {
                let wij = adj.weight(i, j);
                if wij <= 0.0 {
                    clique = false;
                    continue;
                }
                let eta = adj.outside_difference(i, j, &inside) / wij;
                eta_max = eta_max.max(eta);
                let slack = capacity - eta;
                bound = bound.max(if slack > 0.0 {
                    2.0 * t * sigma / (wij * slack)
                } else {
                    f64::INFINITY
                });
            }
        }
        if !clique {
            eta_max = f64::INFINITY;
            bound = f64::INFINITY;
        }
        clusters.push(AsymptoticCluster {
            members,
            pi_hat: pi_hat[alpha],
            clique,
            eta_max,
            capacity,
            cond_a1: clique && eta_max < capacity,
            gamma1_bound: bound,
            cond_b1: bound.is_finite() && gamma1 >= bound,
            prob_merge: 1.0 - fail,
        });
    }
    let mut pairs = Vec::new();
    for a in 0..means.len() {
        for b in a + 1..means.len() {
            let half_gap = 0.5 * linalg::norm(&linalg::sub(&means[a], &means[b]));
            let lhs = gamma1 * (nf - 1.0) * w_tilde_max + gamma2 * (obs.d2() as f64).sqrt();
            let side = |alpha: usize| 1.0 - fail - 2f64.powf(-(f * pi_hat[alpha] - epsilon) * nf);
            pairs.push(AsymptoticPair {
                alpha: a,
                beta: b,
                half_gap,
                cond_c1: lhs < half_gap,
                prob_distinguish: side(a) * side(b),
            });
        }
    }
    Ok(AsymptoticReport {
        t,
        sigma,
        epsilon,
        chi_cdf: f,
        w_tilde_max,
        clusters,
        pairs,
        note: "distinguishing probability uses the theorem-statement exponent -(F pi - eps) n; \
               the proof writes -F pi n + eps n"
            .into(),
    })
}

// --- prediction bound -------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PredictionBoundReport {
    pub n: usize,
    pub d: usize,
    pub num_edges: usize,
    pub components: usize,
    pub sigma_min_b: Option<f64>,
    /// `4 sigma sqrt(d log(d|E|)) / sigma_min(B)`
    pub gamma1_threshold: Option<f64>,
    pub variance_term: f64,
    pub group_term: f64,
    pub nuclear_term: f64,
    pub rhs: f64,
    pub lhs: Option<f64>,
    /// `(1 / sigma_min(B)) sqrt(|E|^2 log(d|E|) / (d n^2))`
    pub consistency: Option<f64>,
    pub weights_at_least_half: bool,
}

impl PredictionBoundReport {
    pub fn holds(&self) -> Option<bool> {
        self.lhs.map(|l| l <= self.rhs)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn prediction_bound(
    x0: &[f64],
    graph: &WeightedGraph,
    sigma: f64,
    gamma1: f64,
    gamma2: f64,
    d1: usize,
    d2: usize,
    x_hat: Option<&[f64]>,
) -> Result<PredictionBoundReport> {
    let n = graph.n();
    let d = d1 * d2;
    linalg::check_len(n * d, x0.len())?;
    if let Some(xh) = x_hat {
        linalg::check_len(n * d, xh.len())?;
    }
    let m = graph.num_edges();
    let kappa0 = connected_components(n, graph.edges())?.count as f64;
    let (nf, df) = (n as f64, d as f64);
    let smin = if m > 0 { Some(sigma_min_b(graph)?) } else { None };
    let log_de = (df * m as f64).ln();
    let gamma1_threshold = smin.map(|s| 4.0 * sigma * (df * log_de.max(0.0)).sqrt() / s);
    let consistency = smin.map(|s| ((m * m) as f64 * log_de.max(0.0) / (df * nf * nf)).sqrt() / s);

    let variance_term = sigma * sigma * (kappa0 / nf + (kappa0 * (df * nf).ln() / (df * nf * nf)).max(0.0).sqrt());
    let mut edge_sum = 0.0;
    for (&(i, j), &w) in graph.edges().iter().zip(graph.weights()) {
        let diff = linalg::sub(&x0[i * d..(i + 1) * d], &x0[j * d..(j + 1) * d]);
        edge_sum += (1.0 + 2.0 * w) * linalg::norm(&diff);
    }
    let group_term = gamma1 / (2.0 * df * nf) * edge_sum;
    let mut nuc = 0.0;
    for b in x0.chunks_exact(d) {
        nuc += linalg::nuclear_norm(&block_to_matrix(b, d1, d2))?;
    }
    let nuclear_term = gamma2 * (sigma / nf.powf(0.25) + nuc / (df * nf));
    let lhs = x_hat.map(|xh| linalg::norm_sq(&linalg::sub(xh, x0)) / (2.0 * df * nf));
    Ok(PredictionBoundReport {
        n,
        d,
        num_edges: m,
        components: kappa0 as usize,
        sigma_min_b: smin,
        gamma1_threshold,
        variance_term,
        group_term,
        nuclear_term,
        rhs: variance_term + group_term + nuclear_term,
        lhs,
        consistency,
        weights_at_least_half: graph.weights().iter().all(|&w| w >= 0.5),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::seeded_rng;
    use rand::Rng;

    fn scalars(values: &[f64]) -> ObservationSet {
        ObservationSet::new(values.len(), 1, 1, values.to_vec()).unwrap()
    }

    #[test]
    fn means_examples() {
        let obs = scalars(&[1.0, 3.0, 7.0]);
        let m = cluster_means(&obs, &LabelVector::new(vec![0, 0, 1]).unwrap()).unwrap();
        assert_eq!(m, vec![vec![2.0], vec![7.0]]);
        let single = cluster_means(&obs, &LabelVector::new(vec![0, 1, 2]).unwrap()).unwrap();
        assert_eq!(single, vec![vec![1.0], vec![3.0], vec![7.0]]);
    }

    #[test]
    fn means_match_naive_sums() {
        let mut rng = seeded_rng(3);
        let n = 30;
        let data: Vec<f64> = (0..n * 6).map(|_| rng.random::<f64>()).collect();
        let obs = ObservationSet::new(n, 3, 2, data.clone()).unwrap();
        let raw: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let labels = LabelVector::new(raw.clone()).unwrap();
        let m = cluster_means(&obs, &labels).unwrap();
        for c in 0..3 {
            for e in 0..6 {
                let mut s = 0.0;
                let mut cnt = 0.0;
                for i in 0..n {
                    if raw[i] == c {
                        s += data[i * 6 + e];
                        cnt += 1.0;
                    }
                }
                assert!((m[c][e] - s / cnt).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn hand_example_quantities() {
        let obs = scalars(&[0.0, 0.2, 1.0, 1.2]);
        let labels = LabelVector::new(vec![0, 0, 1, 1]).unwrap();
        let g = WeightedGraph::fully_connected(4);
        let r = recovery_check(&obs, &labels, &g, 0.1, 0.5).unwrap();
        assert!(r.clusters.iter().all(|c| c.eta_max == 0.0 && c.clique));
        assert!((r.gamma1_min - 0.1).abs() < 1e-15);
        assert!((r.delta.unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(r.w_max, 4.0);
        assert!(r.cond_a);
        // 4 * 0.1 + 0.5 < 1
        assert_eq!(r.region, Region::Perfect);
        assert_eq!(region_classify(&r, 0.1, 0.6), Region::MergeOnly);
        assert_eq!(region_classify(&r, 0.05, 0.1), Region::DistinguishOnly);
        assert_eq!(region_classify(&r, 0.05, 0.9), Region::Neither);
        assert_eq!(region_classify(&r, 1e6, 0.0), Region::MergeOnly);
    }

    #[test]
    fn identical_samples_single_class() {
        let obs = scalars(&[2.0, 2.0, 2.0]);
        let labels = LabelVector::new(vec![0, 0, 0]).unwrap();
        let full = recovery_check(&obs, &labels, &WeightedGraph::fully_connected(3), 0.0, 0.0).unwrap();
        assert_eq!(full.gamma1_min, 0.0);
        assert!(full.clusters[0].clique);
        assert!(full.delta.is_none() && full.cond_c);
        let path = WeightedGraph::unweighted(3, vec![(0, 1), (1, 2)]).unwrap();
        let r = recovery_check(&obs, &labels, &path, 0.0, 0.0).unwrap();
        assert!(!r.clusters[0].clique);
    }

    #[test]
    fn uniform_full_graph_has_zero_eta() {
        let mut rng = seeded_rng(9);
        let data: Vec<f64> = (0..12).map(|_| rng.random::<f64>()).collect();
        let obs = scalars(&data);
        let labels = LabelVector::new(vec![0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2]).unwrap();
        let g = WeightedGraph::fully_connected(12);
        for alpha in 0..3 {
            for (_, _, eta) in eta_pairs(&g, &labels, alpha).unwrap() {
                assert_eq!(eta, 0.0);
            }
        }
        let r = recovery_check(&obs, &labels, &g, 0.0, 0.0).unwrap();
        assert!(r.clusters.iter().all(|c| c.eta_max == 0.0));
    }

    #[test]
    fn eta_matches_enumeration() {
        let labels = LabelVector::new(vec![0, 0, 0, 1, 1]).unwrap();
        let edges = vec![(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (1, 4)];
        let w = vec![1.0, 0.5, 2.0, 0.3, 1.0, 0.7];
        let g = WeightedGraph::new(5, edges, w).unwrap();
        let dense = g.dense_weights();
        for (i, j, eta) in eta_pairs(&g, &labels, 0).unwrap() {
            let mut acc = 0.0;
            for m in [3, 4] {
                acc += dense[(i, m)] - dense[(j, m)];
            }
            assert!((eta - acc.abs() / dense[(i, j)]).abs() < 1e-15);
        }
    }

    #[test]
    fn chi_cdf_closed_forms() {
        assert_eq!(chi_cdf(0.0, 5).unwrap(), 0.0);
        for t in [0.1, 0.5, 1.0, 2.0, 3.7, 8.0] {
            let exact = 1.0 - (-t * t / 2.0f64).exp();
            assert!((chi_cdf(t, 2).unwrap() - exact).abs() < 1e-14);
        }
        assert!(chi_cdf(1.0, 0).is_err());
        assert!(chi_cdf(-1.0, 1).is_err());
    }

    #[test]
    fn chi_cdf_one_dof_matches_quadrature() {
        // Folded normal: 2 * int_0^t phi(s) ds by composite Simpson.
        for t in [0.05, 0.4, 1.0, 1.96, 3.0, 6.0] {
            let steps = 20_000;
            let h = t / steps as f64;
            let phi = |s: f64| (-s * s / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let mut acc = phi(0.0) + phi(t);
            for k in 1..steps {
                acc += if k % 2 == 1 { 4.0 } else { 2.0 } * phi(k as f64 * h);
            }
            let quad = 2.0 * acc * h / 3.0;
            assert!((chi_cdf(t, 1).unwrap() - quad).abs() <= 1e-10, "{t}");
        }
    }

    #[test]
    fn chi_cdf_is_monotone_in_unit_interval() {
        for d in [1, 3, 10, 200, 10_000] {
            let mut prev = 0.0;
            for k in 0..400 {
                let t = k as f64 * (d as f64).sqrt() * 0.01;
                let f = chi_cdf(t, d).unwrap();
                assert!((0.0..=1.0).contains(&f));
                assert!(f >= prev - 1e-15, "{d} {t}");
                prev = f;
            }
        }
    }

    #[test]
    fn asymptotic_complete_graph_and_zero_penalties() {
        let obs = scalars(&[0.0, 0.1, -0.1, 5.0, 5.1, 4.9]);
        let labels = LabelVector::new(vec![0, 0, 0, 1, 1, 1]).unwrap();
        let means = vec![vec![0.0], vec![5.0]];
        let g = WeightedGraph::fully_connected(6);
        let r = asymptotic_check(&obs, &labels, &means, 0.1, &g, 10.0, 0.1, 0.0, 0.0).unwrap();
        assert!(r.clusters.iter().all(|c| c.clique && c.members.len() == 3));
        assert!(r.pairs.iter().all(|p| p.cond_c1));
        assert!(asymptotic_check(&obs, &labels, &means, 0.1, &g, 10.0, 0.9, 0.0, 0.0).is_err());
    }

    #[test]
    fn asymptotic_eta_matches_enumeration() {
        // Ball of radius t sigma = 0.5 around 0 holds samples 0 and 1.
        let obs = scalars(&[0.0, 0.3, 2.0, 2.2]);
        let labels = LabelVector::new(vec![0, 0, 1, 1]).unwrap();
        let means = vec![vec![0.0], vec![2.1]];
        let edges = vec![(0, 1), (0, 2), (1, 3), (2, 3)];
        let w = vec![2.0, 0.4, 0.9, 1.0];
        let g = WeightedGraph::new(4, edges, w).unwrap();
        let r = asymptotic_check(&obs, &labels, &means, 0.5, &g, 1.0, 0.01, 1.0, 0.0).unwrap();
        assert_eq!(r.clusters[0].members, vec![0, 1]);
        let expect = ((0.4f64 - 0.0).abs() + (0.0f64 - 0.9).abs()) / 2.0;
        assert!((r.clusters[0].eta_max - expect).abs() < 1e-15);
    }

    #[test]
    fn prediction_bound_trivial_and_threshold() {
        let g = WeightedGraph::fully_connected(3);
        let r = prediction_bound(&[0.0; 12], &g, 0.0, 1.0, 5.0, 2, 2, None).unwrap();
        assert_eq!(r.rhs, 0.0);
        // sigma = 1, d = 4, |E| = 2, sigma_min(B) = 1 on a path of 3 nodes.
        let path = WeightedGraph::unweighted(3, vec![(0, 1), (1, 2)]).unwrap();
        let r = prediction_bound(&[0.0; 12], &path, 1.0, 1.0, 0.0, 2, 2, None).unwrap();
        let expect = 4.0 * (4.0 * 8f64.ln()).sqrt();
        assert!((r.gamma1_threshold.unwrap() - expect).abs() < 1e-10);
        assert!(r.weights_at_least_half);
    }

    #[test]
    fn prediction_bound_monotone_in_parameters() {
        let mut rng = seeded_rng(11);
        let g = WeightedGraph::fully_connected(5);
        let x0: Vec<f64> = (0..5 * 6).map(|_| rng.random::<f64>()).collect();
        let base = |s: f64, g1: f64, g2: f64| prediction_bound(&x0, &g, s, g1, g2, 3, 2, None).unwrap().rhs;
        for k in 0..10 {
            let v = k as f64 * 0.3;
            assert!(base(v + 0.1, 1.0, 1.0) >= base(v, 1.0, 1.0));
            assert!(base(1.0, v + 0.1, 1.0) >= base(1.0, v, 1.0));
            assert!(base(1.0, 1.0, v + 0.1) >= base(1.0, 1.0, v));
        }
        let r = prediction_bound(&x0, &g, 0.3, 1.0, 1.0, 3, 2, None).unwrap();
        assert!((r.rhs - (r.variance_term + r.group_term + r.nuclear_term)).abs() < 1e-15);
    }
}
