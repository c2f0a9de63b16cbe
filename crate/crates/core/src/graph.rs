//! Neighborhood graphs, edge weights, the matrix-free incidence operator and
//! spectral quantities of the unweighted incidence matrix.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::ObservationSet;
use crate::error::{Error, Result};
use crate::linalg;

/// Undirected graph on `n` nodes. Edge `l` joins `edges[l].0 < edges[l].1`
/// and carries the positive weight `weights[l]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    weights: Vec<f64>,
}

impl WeightedGraph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>, weights: Vec<f64>) -> Result<Self> {
        linalg::check_len(edges.len(), weights.len())?;
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for (l, (&(i, j), &w)) in edges.iter().zip(&weights).enumerate() {
            if i >= j {
                return Err(Error::InvalidArgument(format!(
                    "edge {l} = ({i}, {j}) must satisfy i < j"
                )));
            }
            if j >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge {l} = ({i}, {j}) references a node outside 0..{n}"
                )));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidArgument(format!("edge {l} has weight {w}, must be > 0")));
            }
            if !seen.insert((i, j)) {
                return Err(Error::InvalidArgument(format!("duplicate edge ({i}, {j})")));
            }
        }
        Ok(WeightedGraph { n, edges, weights })
    }

    /// Unit-weight graph on the given edge set.
    pub fn unweighted(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let w = vec![1.0; edges.len()];
        WeightedGraph::new(n, edges, w)
    }

    pub fn fully_connected(n: usize) -> Self {
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let weights = vec![1.0; edges.len()];
        WeightedGraph { n, edges, weights }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        WeightedGraph::new(self.n, self.edges.clone(), weights)
    }

    /// Dense symmetric weight matrix with zeros for non-edges.
    pub fn dense_weights(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n, self.n);
        for (&(i, j), &wij) in self.edges.iter().zip(&self.weights) {
            w[(i, j)] = wij;
            w[(j, i)] = wij;
        }
        w
    }

    pub fn save_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for (&(i, j), w) in self.edges.iter().zip(&self.weights) {
            out.push_str(&format!("{i} {j} {w:e}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Reads `i j w` triples. Pairs given as `j i` are reordered.
    pub fn load_edge_list(path: impl AsRef<Path>, n: usize) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut edges = Vec::new();
        let mut weights = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let parse_err = |m: String| Error::Parse {
                line: idx + 1,
                message: m,
            };
            let fields: Vec<&str> = t.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(parse_err(format!("expected 3 fields, found {}", fields.len())));
            }
            let i: usize = fields[0]
                .parse()
                .map_err(|_| parse_err(format!("bad node index {:?}", fields[0])))?;
            let j: usize = fields[1]
                .parse()
                .map_err(|_| parse_err(format!("bad node index {:?}", fields[1])))?;
            let w: f64 = fields[2]
                .parse()
                .map_err(|_| parse_err(format!("bad weight {:?}", fields[2])))?;
            edges.push((i.min(j), i.max(j)));
            weights.push(w);
        }
        WeightedGraph::new(n, edges, weights)
    }
}

/// How the directed k-NN relation is symmetrized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetrize {
    /// Edge if either endpoint is among the other's neighbors.
    #[default]
    Union,
    /// Edge only if both are among each other's neighbors.
    Intersection,
}

/// Sorted neighbor lists by Frobenius distance, ties broken by smaller index.
fn nearest_neighbors(obs: &ObservationSet, k: usize) -> Vec<Vec<usize>> {
    let n = obs.n();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = obs.squared_distance(i, j);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    (0..n)
        .map(|i| {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let row = &dist[i * n..(i + 1) * n];
            others.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            others.truncate(k);
            others
        })
        .collect()
}

/// Unit-weight k-nearest-neighbor graph, symmetrized by union.
pub fn knn_graph(obs: &ObservationSet, k: usize) -> Result<WeightedGraph> {
    knn_graph_with(obs, k, Symmetrize::Union)
}

pub fn knn_graph_with(obs: &ObservationSet, k: usize, mode: Symmetrize) -> Result<WeightedGraph> {
    let n = obs.n();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must lie in 1..={} for {n} samples",
            n.saturating_sub(1)
        )));
    }
    let nbrs = nearest_neighbors(obs, k);
    let mut is_nbr = vec![false; n * n];
    for (i, list) in nbrs.iter().enumerate() {
        for &j in list {
            is_nbr[i * n + j] = true;
        }
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (is_nbr[i * n + j], is_nbr[j * n + i]);
            let keep = match mode {
                Symmetrize::Union => a || b,
                Symmetrize::Intersection => a && b,
            };
            if keep {
                edges.push((i, j));
            }
        }
    }
    WeightedGraph::unweighted(n, edges)
}

/// Replaces each weight by `exp(-phi * ||A_i - A_j||_F^2)`.
pub fn gaussian_weights(obs: &ObservationSet, graph: &WeightedGraph, phi: f64) -> Result<WeightedGraph> {
    if !(phi > 0.0) {
        return Err(Error::InvalidArgument(format!("kernel scale {phi} must be > 0")));
    }
    if graph.n() != obs.n() {
        return Err(Error::LengthMismatch {
            expected: obs.n(),
            got: graph.n(),
        });
    }
    let weights = graph
        .edges()
        .iter()
        .map(|&(i, j)| (-phi * obs.squared_distance(i, j)).exp())
        .collect::<Vec<_>>();
    // Weights underflowing to zero would leave the edge set; keep the smallest
    // positive double instead so the graph topology is unchanged.
    let weights = weights
        .into_iter()
        .map(|w| if w > 0.0 { w } else { f64::MIN_POSITIVE })
        .collect();
    graph.with_weights(weights)
}

/// Edge differences: block `l` of the output is `x_i - x_j` for edge `l = (i, j)`.
pub fn apply_d(graph: &WeightedGraph, x: &[f64], d: usize) -> Result<Vec<f64>> {
    linalg::check_len(d * graph.n(), x.len())?;
    let mut out = vec![0.0; d * graph.num_edges()];
    for (l, &(i, j)) in graph.edges().iter().enumerate() {
        let xi = &x[i * d..(i + 1) * d];
        let xj = &x[j * d..(j + 1) * d];
        for ((o, a), b) in out[l * d..(l + 1) * d].iter_mut().zip(xi).zip(xj) {
            *o = a - b;
        }
    }
    Ok(out)
}

/// Adjoint of [`apply_d`].
pub fn apply_dt(graph: &WeightedGraph, y: &[f64], d: usize) -> Result<Vec<f64>> {
    linalg::check_len(d * graph.num_edges(), y.len())?;
    let mut out = vec![0.0; d * graph.n()];
    for (l, &(i, j)) in graph.edges().iter().enumerate() {
        let yl = &y[l * d..(l + 1) * d];
        for (o, v) in out[i * d..(i + 1) * d].iter_mut().zip(yl) {
            *o += v;
        }
        for (o, v) in out[j * d..(j + 1) * d].iter_mut().zip(yl) {
            *o -= v;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentLabels {
    pub labels: Vec<usize>,
    pub count: usize,
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Component ids are assigned in order of each component's smallest node.
pub fn connected_components(n: usize, edges: &[(usize, usize)]) -> Result<ComponentLabels> {
    let mut uf = UnionFind::new(n);
    for &(i, j) in edges {
        if i >= n || j >= n {
            return Err(Error::InvalidArgument(format!(
                "edge ({i}, {j}) references a node outside 0..{n}"
            )));
        }
        uf.union(i, j);
    }
    let mut id_of_root = vec![usize::MAX; n];
    let mut labels = vec![0; n];
    let mut count = 0;
    for (v, label) in labels.iter_mut().enumerate() {
        let r = uf.find(v);
        if id_of_root[r] == usize::MAX {
            id_of_root[r] = count;
            count += 1;
        }
        *label = id_of_root[r];
    }
    Ok(ComponentLabels { labels, count })
}

/// Relative cutoff below which Laplacian eigenvalues count as zero.
const ZERO_EIGEN_REL: f64 = 1e-9;
const DENSE_EIGEN_MAX_N: usize = 2048;

/// Unweighted graph Laplacian `B B^T`.
pub fn laplacian(graph: &WeightedGraph) -> DMatrix<f64> {
    let n = graph.n();
    let mut l = DMatrix::zeros(n, n);
    for &(i, j) in graph.edges() {
        l[(i, i)] += 1.0;
        l[(j, j)] += 1.0;
        l[(i, j)] -= 1.0;
        l[(j, i)] -= 1.0;
    }
    l
}

/// Smallest nonzero singular value of the unweighted incidence matrix.
pub fn sigma_min_b(graph: &WeightedGraph) -> Result<f64> {
    if graph.num_edges() == 0 {
        return Err(Error::InvalidArgument("graph has no edges".into()));
    }
    if graph.n() <= DENSE_EIGEN_MAX_N {
        sigma_min_b_dense(graph)
    } else {
        sigma_min_b_inverse_iteration(graph)
    }
}

fn sigma_min_b_dense(graph: &WeightedGraph) -> Result<f64> {
    let eig = SymmetricEigen::new(laplacian(graph));
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cut = ZERO_EIGEN_REL * top;
    eig.eigenvalues
        .iter()
        .filter(|&&e| e > cut)
        .cloned()
        .reduce(f64::min)
        .map(f64::sqrt)
        .ok_or_else(|| Error::InvalidArgument("Laplacian has no nonzero eigenvalue".into()))
}

fn laplacian_apply(graph: &WeightedGraph, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for &(i, j) in graph.edges() {
        let diff = x[i] - x[j];
        out[i] += diff;
        out[j] -= diff;
    }
}

/// Inverse iteration on the Laplacian restricted to the complement of its
/// null space (the component indicator vectors), with CG inner solves.
fn sigma_min_b_inverse_iteration(graph: &WeightedGraph) -> Result<f64> {
    let n = graph.n();
    let comps = connected_components(n, graph.edges())?;
    let mut sizes = vec![0usize; comps.count];
    for &c in &comps.labels {
        sizes[c] += 1;
    }
    let project = |x: &mut [f64]| {
        let mut sums = vec![0.0; comps.count];
        for (v, &c) in x.iter().zip(&comps.labels) {
            sums[c] += v;
        }
        for (v, &c) in x.iter_mut().zip(&comps.labels) {
            *v -= sums[c] / sizes[c] as f64;
        }
    };
    let mut x: Vec<f64> = (0..n).map(|i| ((i * 7919 % 1013) as f64) / 1013.0 - 0.5).collect();
    project(&mut x);
    let mut lambda = f64::NAN;
    let mut lx = vec![0.0; n];
    for _ in 0..200 {
        let nx = linalg::norm(&x);
        if nx == 0.0 {
            return Err(Error::InvalidArgument("Laplacian has no nonzero eigenvalue".into()));
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let mut y = vec![0.0; n];
        let mut r = x.clone();
        let mut p = r.clone();
        let mut rr = linalg::norm_sq(&r);
        let mut ap = vec![0.0; n];
        for _ in 0..10 * n {
            laplacian_apply(graph, &p, &mut ap);
            let pap = linalg::dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rr / pap;
            linalg::axpy(alpha, &p, &mut y);
            linalg::axpy(-alpha, &ap, &mut r);
            let rr_new = linalg::norm_sq(&r);
            if rr_new.sqrt() < 1e-12 {
                break;
            }
            let beta = rr_new / rr;
            for (pi, ri) in p.iter_mut().zip(&r) {
                *pi = ri + beta * *pi;
            }
            rr = rr_new;
        }
        project(&mut y);
        laplacian_apply(graph, &y, &mut lx);
        let next = linalg::dot(&y, &lx) / linalg::norm_sq(&y);
        let done = (next - lambda).abs() <= 1e-12 * next;
        lambda = next;
        x = y;
        if done {
            break;
        }
    }
    Ok(lambda.sqrt())
}

/// Lower bound `(2/n) sqrt((k+1)/3)` on the smallest nonzero singular value
/// of a k-NN graph's incidence matrix.
pub fn knn_sigma_lower_bound(n: usize, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k = {k} must be >= 2")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n = {n} must be >= 2")));
    }
    Ok(2.0 / n as f64 * ((k as f64 + 1.0) / 3.0).sqrt())
}
