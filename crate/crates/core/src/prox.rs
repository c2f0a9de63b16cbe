//! Proximal maps of the weighted group-lasso term and the per-sample nuclear
//! norm, together with one element of each generalized Jacobian.
//!
//! Jacobian elements are chosen from the B-subdifferential: at the kink of the
//! block threshold (`||u|| = eta`) the zero operator is used, and singular
//! values equal to the threshold get zero coefficient rows.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::linalg::{self, block_to_matrix, matrix_to_block};

const BOUNDARY_REL_TOL: f64 = 1e-12;
const DENOM_FLOOR: f64 = 1e-300;

/// `u * max(0, 1 - eta / ||u||)`.
pub fn block_soft_threshold(u: &[f64], eta: f64) -> Vec<f64> {
    let mut out = u.to_vec();
    block_soft_threshold_in_place(&mut out, eta);
    out
}

fn block_soft_threshold_in_place(u: &mut [f64], eta: f64) {
    let nrm = linalg::norm(u);
    if nrm > eta {
        let scale = 1.0 - eta / nrm;
        u.iter_mut().for_each(|v| *v *= scale);
    } else {
        u.iter_mut().for_each(|v| *v = 0.0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThresholdCase {
    Outside,
    Boundary,
    Inside,
}

/// Jacobian element of the block soft-threshold at `u`.
#[derive(Clone, Debug)]
pub struct BlockThresholdJacobian {
    pub case: ThresholdCase,
    pub u: Vec<f64>,
    pub norm: f64,
    pub eta: f64,
    /// Interpolation parameter of the boundary element `t u u^T / eta^2`.
    pub t: f64,
}

impl BlockThresholdJacobian {
    pub fn new(u: &[f64], eta: f64) -> Self {
        let norm = linalg::norm(u);
        let case = if eta == 0.0 {
            // Identity map; its Jacobian is the identity everywhere.
            ThresholdCase::Outside
        } else if (norm - eta).abs() <= BOUNDARY_REL_TOL * norm.max(eta) {
            ThresholdCase::Boundary
        } else if norm > eta {
            ThresholdCase::Outside
        } else {
            ThresholdCase::Inside
        };
        BlockThresholdJacobian {
            case,
            u: u.to_vec(),
            norm,
            eta,
            t: 0.0,
        }
    }

    /// Adds `scale * J h` to `out`.
    pub fn apply_add(&self, h: &[f64], scale: f64, out: &mut [f64]) {
        match self.case {
            ThresholdCase::Outside if self.eta == 0.0 => linalg::axpy(scale, h, out),
            ThresholdCase::Outside => {
                let a = 1.0 - self.eta / self.norm;
                let b = self.eta * linalg::dot(&self.u, h) / self.norm.powi(3);
                for ((o, hi), ui) in out.iter_mut().zip(h).zip(&self.u) {
                    *o += scale * (a * hi + b * ui);
                }
            }
            ThresholdCase::Boundary if self.t != 0.0 => {
                let c = self.t * linalg::dot(&self.u, h) / (self.eta * self.eta);
                linalg::axpy(scale * c, &self.u, out);
            }
            ThresholdCase::Boundary | ThresholdCase::Inside => {}
        }
    }

    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; h.len()];
        self.apply_add(h, 1.0, &mut out);
        out
    }
}

pub fn block_soft_threshold_jacobian(u: &[f64], eta: f64) -> BlockThresholdJacobian {
    BlockThresholdJacobian::new(u, eta)
}

/// Cached thin SVD of a `d1 x d2` block (`d1 >= d2`) and its threshold.
///
/// The trailing `d1 - d2` left singular vectors are never formed; the
/// operators below use the projector `I - U1 U1^T` in their place.
#[derive(Clone, Debug)]
pub struct SvtFactorization {
    pub u1: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub gamma: f64,
}

impl SvtFactorization {
    pub fn d1(&self) -> usize {
        self.u1.nrows()
    }

    pub fn d2(&self) -> usize {
        self.v.nrows()
    }

    /// `U1 diag(max(sigma - gamma, 0)) V^T`.
    pub fn thresholded(&self) -> DMatrix<f64> {
        let shrunk = self.sigma.map(|s| (s - self.gamma).max(0.0));
        let mut us = self.u1.clone();
        for (k, s) in shrunk.iter().enumerate() {
            us.column_mut(k).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

/// Singular value soft-thresholding of `g` by `gamma`.
pub fn svt(g: &DMatrix<f64>, gamma: f64) -> Result<(DMatrix<f64>, SvtFactorization)> {
    let (d1, d2) = g.shape();
    if d1 < d2 {
        return Err(Error::Dimension(format!("svt expects d1 >= d2, got {d1}x{d2}")));
    }
    if !(gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("threshold {gamma} must be >= 0")));
    }
    let svd = linalg::thin_svd(g.clone())?;
    let fact = SvtFactorization {
        u1: svd.u,
        v: svd.v,
        sigma: svd.singular_values,
        gamma,
    };
    Ok((fact.thresholded(), fact))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralIndex {
    /// `sigma > gamma`
    Above,
    /// `sigma == gamma` within tolerance
    Equal,
    /// `sigma < gamma`
    Below,
}

/// Generalized Jacobian element of singular value thresholding.
///
/// With `W1 = U1^T W V` the operator is
/// `U1 (G_sym o sym(W1) + G_skew o skew(W1)) V^T + (I - U1 U1^T) W V diag(mu) V^T`.
#[derive(Clone, Debug)]
pub struct NuclearJacobian {
    pub fact: SvtFactorization,
    pub index: Vec<SpectralIndex>,
    /// `Gamma_{alpha alpha}`: ones on the above/above, above/equal blocks and
    /// `tau` on the above/below block.
    pub gamma_sym: DMatrix<f64>,
    /// `Gamma_{alpha gamma}`: the `omega` coefficients.
    pub gamma_skew: DMatrix<f64>,
    /// Column scaling of the complement term; `(sigma_j - gamma) / sigma_j` on
    /// the above-threshold indices, zero elsewhere.
    pub mu: DVector<f64>,
    identity: bool,
    zero: bool,
}

pub fn nuclear_jacobian(fact: &SvtFactorization) -> NuclearJacobian {
    let p = fact.sigma.len();
    let gamma = fact.gamma;
    let top = fact.sigma.iter().cloned().fold(0.0, f64::max);
    let tol = BOUNDARY_REL_TOL * top.max(1.0);
    let index: Vec<SpectralIndex> = fact
        .sigma
        .iter()
        .map(|&s| {
            if gamma == 0.0 {
                if s > 0.0 {
                    SpectralIndex::Above
                } else {
                    SpectralIndex::Equal
                }
            } else if (s - gamma).abs() <= tol {
                SpectralIndex::Equal
            } else if s > gamma {
                SpectralIndex::Above
            } else {
                SpectralIndex::Below
            }
        })
        .collect();
    let mut gamma_sym = DMatrix::zeros(p, p);
    let mut gamma_skew = DMatrix::zeros(p, p);
    let mut mu = DVector::zeros(p);
    for i in 0..p {
        if index[i] != SpectralIndex::Above {
            continue;
        }
        let si = fact.sigma[i];
        mu[i] = (si - gamma) / si;
        for j in 0..p {
            let sj = fact.sigma[j];
            let sym = match index[j] {
                SpectralIndex::Above | SpectralIndex::Equal => 1.0,
                SpectralIndex::Below => (si - gamma) / (si - sj).max(DENOM_FLOOR),
            };
            let skew = (si - gamma + (sj - gamma).max(0.0)) / (si + sj).max(DENOM_FLOOR);
            gamma_sym[(i, j)] = sym;
            gamma_sym[(j, i)] = sym;
            gamma_skew[(i, j)] = skew;
            gamma_skew[(j, i)] = skew;
        }
    }
    // The identity shortcut applies when thresholding is the identity map.
    let identity = gamma == 0.0;
    let zero = index.iter().all(|&k| k != SpectralIndex::Above) && !identity;
    NuclearJacobian {
        fact: fact.clone(),
        index,
        gamma_sym,
        gamma_skew,
        mu,
        identity,
        zero,
    }
}

impl NuclearJacobian {
    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn apply(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (d1, d2) = (self.fact.d1(), self.fact.d2());
        if w.shape() != (d1, d2) {
            return Err(Error::Dimension(format!(
                "Jacobian expects {d1}x{d2}, got {:?}",
                w.shape()
            )));
        }
        if self.identity {
            return Ok(w.clone());
        }
        if self.zero {
            return Ok(DMatrix::zeros(d1, d2));
        }
        let u1 = &self.fact.u1;
        let v = &self.fact.v;
        let wv = w * v;
        let w1 = u1.transpose() * &wv;
        let p = w1.nrows();
        let mut inner = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                let sym = 0.5 * (w1[(i, j)] + w1[(j, i)]);
                let skew = 0.5 * (w1[(i, j)] - w1[(j, i)]);
                inner[(i, j)] = self.gamma_sym[(i, j)] * sym + self.gamma_skew[(i, j)] * skew;
            }
        }
        // (I - U1 U1^T) W V = U2 U2^T W V
        let mut comp = wv - u1 * &w1;
        for (k, m) in self.mu.iter().enumerate() {
            comp.column_mut(k).scale_mut(*m);
        }
        Ok((u1 * inner + comp) * v.transpose())
    }

    /// Applies the operator to a row-major block and adds `scale` times the
    /// result into `out`.
    pub fn apply_block_add(&self, w: &[f64], scale: f64, out: &mut [f64]) -> Result<()> {
        let (d1, d2) = (self.fact.d1(), self.fact.d2());
        linalg::check_len(d1 * d2, w.len())?;
        if self.zero {
            return Ok(());
        }
        if self.identity {
            linalg::axpy(scale, w, out);
            return Ok(());
        }
        let r = self.apply(&block_to_matrix(w, d1, d2))?;
        let mut tmp = vec![0.0; d1 * d2];
        matrix_to_block(&r, &mut tmp);
        linalg::axpy(scale, &tmp, out);
        Ok(())
    }
}

pub fn apply_nuclear_jacobian(j: &NuclearJacobian, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    j.apply(w)
}

/// Blockwise group-lasso prox: edge block `l` is thresholded by
/// `nu * gamma1 * w_l`.
pub fn prox_g(y: &[f64], nu: f64, graph: &WeightedGraph, gamma1: f64) -> Result<Vec<f64>> {
    let m = graph.num_edges();
    if m == 0 {
        linalg::check_len(0, y.len())?;
        return Ok(Vec::new());
    }
    if y.len() % m != 0 {
        return Err(Error::LengthMismatch {
            expected: m * (y.len() / m + 1),
            got: y.len(),
        });
    }
    let d = y.len() / m;
    let mut out = y.to_vec();
    for (block, &w) in out.chunks_exact_mut(d).zip(graph.weights()) {
        block_soft_threshold_in_place(block, nu * gamma1 * w);
    }
    Ok(out)
}

/// Per-sample singular value thresholding by `nu * gamma2`.
pub fn prox_h(z: &[f64], nu: f64, d1: usize, d2: usize, gamma2: f64) -> Result<Vec<f64>> {
    let d = d1 * d2;
    if z.len() % d != 0 {
        return Err(Error::LengthMismatch {
            expected: d * (z.len() / d + 1),
            got: z.len(),
        });
    }
    let thresh = nu * gamma2;
    if thresh == 0.0 {
        return Ok(z.to_vec());
    }
    let mut out = vec![0.0; z.len()];
    for (src, dst) in z.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        let (x, _) = svt(&block_to_matrix(src, d1, d2), thresh)?;
        matrix_to_block(&x, dst);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::seeded_rng;
    use rand::Rng;

    fn random_matrix(rng: &mut impl Rng, d1: usize, d2: usize) -> DMatrix<f64> {
        DMatrix::from_fn(d1, d2, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn block_threshold_examples() {
        assert_eq!(block_soft_threshold(&[3.0, 4.0], 2.5), vec![1.5, 2.0]);
        assert_eq!(block_soft_threshold(&[3.0, 4.0], 5.0), vec![0.0, 0.0]);
        assert_eq!(block_soft_threshold(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
    }

    #[test]
    fn block_jacobian_cases() {
        let h = [0.3, -1.2, 0.7];
        let id = block_soft_threshold_jacobian(&[0.0, 0.0, 0.0], 0.0);
        assert_eq!(id.apply(&h), h.to_vec());
        let inside = block_soft_threshold_jacobian(&[0.1, 0.1, 0.1], 1.0);
        assert_eq!(inside.case, ThresholdCase::Inside);
        assert_eq!(inside.apply(&h), vec![0.0; 3]);
        let boundary = block_soft_threshold_jacobian(&[3.0, 4.0], 5.0);
        assert_eq!(boundary.case, ThresholdCase::Boundary);
        assert_eq!(boundary.apply(&[1.0, 1.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn block_jacobian_matches_finite_differences() {
        let mut rng = seeded_rng(1);
        for _ in 0..50 {
            let u: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let eta = 0.5 * linalg::norm(&u);
            let h: Vec<f64> = (0..4).map(|_| rng.random::<f64>() - 0.5).collect();
            let eps = 1e-6;
            let plus = block_soft_threshold(&linalg::add(&u, &linalg::scaled(eps, &h)), eta);
            let minus = block_soft_threshold(&linalg::sub(&u, &linalg::scaled(eps, &h)), eta);
            let fd = linalg::scaled(0.5 / eps, &linalg::sub(&plus, &minus));
            let jh = block_soft_threshold_jacobian(&u, eta).apply(&h);
            let err = linalg::norm(&linalg::sub(&fd, &jh)) / linalg::norm(&jh);
            assert!(err <= 1e-6, "rel err {err}");
        }
    }

    #[test]
    fn svt_diagonal_and_zero() {
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        let (x, _) = svt(&g, 1.0).unwrap();
        assert!((x[(0, 0)] - 2.0).abs() < 1e-14);
        assert!(x[(1, 1)].abs() < 1e-14 && x[(0, 1)].abs() < 1e-14);
        let (z, _) = svt(&DMatrix::zeros(3, 2), 0.5).unwrap();
        assert_eq!(z, DMatrix::zeros(3, 2));
        assert!(svt(&DMatrix::zeros(2, 3), 0.5).is_err());
    }

    #[test]
    fn svt_matches_reconstruction_and_factor_is_orthogonal() {
        let mut rng = seeded_rng(2);
        let g = random_matrix(&mut rng, 5, 3);
        let (x, f) = svt(&g, 0.4).unwrap();
        let svd = nalgebra::SVD::new_unordered(g.clone(), true, true);
        let mut expect = DMatrix::zeros(5, 3);
        for k in 0..3 {
            let s = (svd.singular_values[k] - 0.4).max(0.0);
            expect += s * svd.u.as_ref().unwrap().column(k) * svd.v_t.as_ref().unwrap().row(k);
        }
        assert!((&x - &expect).norm() <= 1e-10);
        assert!((f.u1.transpose() * &f.u1 - DMatrix::identity(3, 3)).norm() < 1e-10);
        assert!((f.v.transpose() * &f.v - DMatrix::identity(3, 3)).norm() < 1e-10);
        assert!(f.sigma.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn nuclear_jacobian_all_below_is_zero() {
        let mut rng = seeded_rng(3);
        let g = random_matrix(&mut rng, 4, 3);
        let (_, f) = svt(&g, 100.0).unwrap();
        let j = nuclear_jacobian(&f);
        assert!(j.index.iter().all(|&k| k == SpectralIndex::Below));
        let w = random_matrix(&mut rng, 4, 3);
        assert_eq!(j.apply(&w).unwrap(), DMatrix::zeros(4, 3));
    }

    #[test]
    fn nuclear_jacobian_zero_threshold_is_identity() {
        let mut rng = seeded_rng(4);
        let g = random_matrix(&mut rng, 6, 4);
        let (_, f) = svt(&g, 0.0).unwrap();
        let j = nuclear_jacobian(&f);
        assert!(j.index.iter().all(|&k| k == SpectralIndex::Above));
        let w = random_matrix(&mut rng, 6, 4);
        assert!((j.apply(&w).unwrap() - &w).norm() < 1e-12);
        // Same result through the general formula.
        let general = NuclearJacobian {
            identity: false,
            ..j.clone()
        };
        assert!((general.apply(&w).unwrap() - &w).norm() < 1e-10);
    }

    #[test]
    fn nuclear_jacobian_matches_finite_differences() {
        let mut rng = seeded_rng(5);
        let mut checked = 0;
        while checked < 30 {
            let (d1, d2) = (rng.random_range(2..7), rng.random_range(1..5));
            let (d1, d2) = (d1.max(d2), d1.min(d2));
            let g = random_matrix(&mut rng, d1, d2);
            let gamma = rng.random::<f64>();
            let (_, f) = svt(&g, gamma).unwrap();
            let s = f.sigma.as_slice();
            let separated = s.windows(2).all(|w| w[0] - w[1] >= 1e-3)
                && s.iter().all(|&x| (x - gamma).abs() >= 1e-3);
            if !separated {
                continue;
            }
            let w = random_matrix(&mut rng, d1, d2);
            let eps = 1e-6;
            let plus = svt(&(&g + eps * &w), gamma).unwrap().0;
            let minus = svt(&(&g - eps * &w), gamma).unwrap().0;
            let fd = (plus - minus) / (2.0 * eps);
            let jw = nuclear_jacobian(&f).apply(&w).unwrap();
            let err = (&fd - &jw).norm() / jw.norm().max(1e-12);
            assert!(err <= 1e-5, "rel err {err} at {d1}x{d2}");
            checked += 1;
        }
    }

    #[test]
    fn nuclear_jacobian_self_adjoint_and_contractive() {
        let mut rng = seeded_rng(6);
        for _ in 0..100 {
            let g = random_matrix(&mut rng, 5, 3);
            let (_, f) = svt(&g, 0.5).unwrap();
            let j = nuclear_jacobian(&f);
            let w = random_matrix(&mut rng, 5, 3);
            let z = random_matrix(&mut rng, 5, 3);
            let qw = j.apply(&w).unwrap();
            let qz = j.apply(&z).unwrap();
            let lhs = qw.dot(&z);
            let rhs = w.dot(&qz);
            assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
            let quad = w.dot(&qw);
            assert!(quad >= -1e-12 && quad <= w.norm_squared() + 1e-12);
            assert_eq!(j.apply(&DMatrix::zeros(5, 3)).unwrap(), DMatrix::zeros(5, 3));
        }
    }

    #[test]
    fn nuclear_jacobian_places_ties_in_equal_set() {
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 0.5]));
        let (_, f) = svt(&g, 1.0).unwrap();
        let j = nuclear_jacobian(&f);
        assert_eq!(
            j.index,
            vec![SpectralIndex::Above, SpectralIndex::Equal, SpectralIndex::Below]
        );
        assert_eq!(j.gamma_sym[(1, 1)], 0.0);
        assert_eq!(j.gamma_sym[(0, 1)], 1.0);
        assert!((j.gamma_sym[(0, 2)] - 2.0 / 2.5).abs() < 1e-15);
        assert!((j.gamma_skew[(0, 2)] - 2.0 / 3.5).abs() < 1e-15);
        assert!((j.mu[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn prox_g_reduces_to_block_threshold() {
        let g = WeightedGraph::new(2, vec![(0, 1)], vec![0.5]).unwrap();
        let out = prox_g(&[3.0, 4.0], 2.0, &g, 2.5).unwrap();
        assert_eq!(out, block_soft_threshold(&[3.0, 4.0], 2.5));
        assert_eq!(prox_g(&[0.0, 0.0], 1.0, &g, 1.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn prox_g_matches_grid_minimizer() {
        // Dense oracle: minimize 0.5||u - y||^2 + eta ||u|| over a grid, then
        // refine the grid around the best point.
        let mut rng = seeded_rng(7);
        let g = WeightedGraph::new(3, vec![(0, 1), (1, 2)], vec![0.7, 1.3]).unwrap();
        for _ in 0..5 {
            let y: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let out = prox_g(&y, 0.8, &g, 1.1).unwrap();
            for l in 0..2 {
                let yl = &y[2 * l..2 * l + 2];
                let eta = 0.8 * 1.1 * g.weights()[l];
                let obj = |a: f64, b: f64| {
                    0.5 * ((a - yl[0]).powi(2) + (b - yl[1]).powi(2)) + eta * (a * a + b * b).sqrt()
                };
                let (mut ca, mut cb, mut half) = (0.0, 0.0, 3.0);
                for _ in 0..40 {
                    let mut best = (f64::INFINITY, ca, cb);
                    for ia in -10..=10 {
                        for ib in -10..=10 {
                            let a = ca + half * ia as f64 / 10.0;
                            let b = cb + half * ib as f64 / 10.0;
                            let v = obj(a, b);
                            if v < best.0 {
                                best = (v, a, b);
                            }
                        }
                    }
                    ca = best.1;
                    cb = best.2;
                    half *= 0.3;
                }
                assert!((out[2 * l] - ca).abs() < 1e-6 && (out[2 * l + 1] - cb).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn prox_h_reductions() {
        let mut rng = seeded_rng(8);
        let g = random_matrix(&mut rng, 4, 2);
        let block = linalg::matrix_to_vec(&g);
        let out = prox_h(&block, 0.5, 4, 2, 0.6).unwrap();
        let (expect, _) = svt(&g, 0.3).unwrap();
        assert!((block_to_matrix(&out, 4, 2) - expect).norm() < 1e-12);
        assert_eq!(prox_h(&block, 0.5, 4, 2, 0.0).unwrap(), block);
        assert!(prox_h(&block[..7], 0.5, 4, 2, 0.6).is_err());
    }
}
