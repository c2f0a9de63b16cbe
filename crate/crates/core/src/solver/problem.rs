use serde::{Deserialize, Serialize};

use crate::dataset::ObservationSet;
use crate::error::{Error, Result};
use crate::graph::{apply_d, apply_dt, WeightedGraph};
use crate::linalg::{self, block_to_matrix, check_len};
use crate::prox::{prox_g, prox_h};

/// Problem data in vector form: stacked observations `a` (one row-major
/// `d1 x d2` block per sample), the weighted graph and the two penalties.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    a: Vec<f64>,
    n: usize,
    d1: usize,
    d2: usize,
    graph: WeightedGraph,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl ProblemSpec {
    pub fn new(obs: &ObservationSet, graph: WeightedGraph, gamma1: f64, gamma2: f64) -> Result<Self> {
        Self::from_parts(obs.data().to_vec(), obs.n(), obs.d1(), obs.d2(), graph, gamma1, gamma2)
    }

    pub fn from_parts(
        a: Vec<f64>,
        n: usize,
        d1: usize,
        d2: usize,
        graph: WeightedGraph,
        gamma1: f64,
        gamma2: f64,
    ) -> Result<Self> {
        if n == 0 || d1 == 0 || d2 == 0 {
            return Err(Error::Dimension("empty problem".into()));
        }
        if d1 < d2 {
            return Err(Error::Dimension(format!("blocks must have d1 >= d2, got {d1}x{d2}")));
        }
        check_len(n * d1 * d2, a.len())?;
        if let Some(index) = a.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if graph.n() != n {
            return Err(Error::Dimension(format!(
                "graph has {} nodes but there are {n} samples",
                graph.n()
            )));
        }
        let spec = ProblemSpec {
            a,
            n,
            d1,
            d2,
            graph,
            gamma1,
            gamma2,
        };
        spec.with_gammas(gamma1, gamma2)
    }

    /// Same data with different penalties.
    pub fn with_gammas(&self, gamma1: f64, gamma2: f64) -> Result<Self> {
        for (name, g) in [("gamma1", gamma1), ("gamma2", gamma2)] {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} = {g} must be finite and >= 0")));
            }
        }
        Ok(ProblemSpec {
            gamma1,
            gamma2,
            ..self.clone()
        })
    }

    pub fn a(&self) -> &[f64] {
        &self.a
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

    /// Entries per block, `d1 * d2`.
    pub fn d(&self) -> usize {
        self.d1 * self.d2
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn num_edges(&self) -> usize {
        self.graph.num_edges()
    }

    pub fn primal_len(&self) -> usize {
        self.n * self.d()
    }

    pub fn edge_len(&self) -> usize {
        self.num_edges() * self.d()
    }

    pub fn apply_d(&self, x: &[f64]) -> Result<Vec<f64>> {
        apply_d(&self.graph, x, self.d())
    }

    pub fn apply_dt(&self, y: &[f64]) -> Result<Vec<f64>> {
        apply_dt(&self.graph, y, self.d())
    }

    /// `Prox_{nu g}`.
    pub fn prox_g(&self, y: &[f64], nu: f64) -> Result<Vec<f64>> {
        check_len(self.edge_len(), y.len())?;
        prox_g(y, nu, &self.graph, self.gamma1)
    }

    /// `Prox_{nu h}`.
    pub fn prox_h(&self, z: &[f64], nu: f64) -> Result<Vec<f64>> {
        check_len(self.primal_len(), z.len())?;
        prox_h(z, nu, self.d1, self.d2, self.gamma2)
    }

    /// `g(y) = gamma1 sum_l w_l ||y_l||`
    pub fn g_value(&self, y: &[f64]) -> Result<f64> {
        check_len(self.edge_len(), y.len())?;
        let d = self.d();
        if d == 0 || self.num_edges() == 0 {
            return Ok(0.0);
        }
        Ok(self.gamma1
            * y.chunks_exact(d)
                .zip(self.graph.weights())
                .map(|(b, w)| w * linalg::norm(b))
                .sum::<f64>())
    }

    /// `h(z) = gamma2 sum_i ||Z_i||_*`
    pub fn h_value(&self, z: &[f64]) -> Result<f64> {
        check_len(self.primal_len(), z.len())?;
        if self.gamma2 == 0.0 {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for b in z.chunks_exact(self.d()) {
            total += linalg::nuclear_norm(&block_to_matrix(b, self.d1, self.d2))?;
        }
        Ok(self.gamma2 * total)
    }
}

/// Solver parameters. Sequences are `eps_k = eps_c / (k+1)^2`,
/// `delta_k = delta_c / (k+1)^2` and `delta'_k = delta_prime_c / (k+1)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SolverOptions {
    pub sigma0: f64,
    pub rho: f64,
    pub sigma_cap: f64,
    pub tol: f64,
    pub max_outer: usize,
    pub eps_c: f64,
    pub delta_c: f64,
    pub delta_prime_c: f64,
    pub mu_bar: f64,
    pub tau_bar: f64,
    pub gamma_bar: f64,
    pub delta_bar: f64,
    pub cg_cap: usize,
    pub max_newton: usize,
    /// Absolute floor on the inner exit threshold, as a multiple of
    /// `tol * (1 + ||a||)`.
    pub inner_floor: f64,
    pub merge_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            sigma0: 1.0,
            rho: 3.0,
            sigma_cap: 1e8,
            tol: 1e-6,
            max_outer: 200,
            eps_c: 1.0,
            delta_c: 1.0,
            delta_prime_c: 1.0,
            mu_bar: 1e-4,
            tau_bar: 0.5,
            gamma_bar: 0.1,
            delta_bar: 0.5,
            cg_cap: 500,
            max_newton: 200,
            inner_floor: 1e-2,
            merge_tol: 1e-6,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return bad("sigma0 must be positive");
        }
        if !(self.rho > 1.0) {
            return bad("rho must exceed 1");
        }
        if !(self.sigma_cap >= self.sigma0) {
            return bad("sigma cap must be >= sigma0");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if self.max_outer == 0 || self.cg_cap == 0 || self.max_newton == 0 {
            return bad("iteration caps must be positive");
        }
        if !(self.eps_c > 0.0 && self.delta_c > 0.0 && self.delta_prime_c > 0.0) {
            return bad("inner exit constants must be positive");
        }
        if !(self.mu_bar > 0.0 && self.mu_bar < 0.5) {
            return bad("mu_bar must lie in (0, 1/2)");
        }
        if !(self.tau_bar > 0.0 && self.tau_bar <= 1.0) {
            return bad("tau_bar must lie in (0, 1]");
        }
        if !(self.gamma_bar > 0.0 && self.gamma_bar < 1.0) {
            return bad("gamma_bar must lie in (0, 1)");
        }
        if !(self.delta_bar > 0.0 && self.delta_bar < 1.0) {
            return bad("delta_bar must lie in (0, 1)");
        }
        if !(self.inner_floor >= 0.0) {
            return bad("inner_floor must be >= 0");
        }
        if !(self.merge_tol >= 0.0) {
            return bad("merge_tol must be >= 0");
        }
        Ok(())
    }

    pub fn eps_k(&self, k: usize) -> f64 {
        self.eps_c / ((k + 1) as f64).powi(2)
    }

    pub fn delta_k(&self, k: usize) -> f64 {
        self.delta_c / ((k + 1) as f64).powi(2)
    }

    pub fn delta_prime_k(&self, k: usize) -> f64 {
        self.delta_prime_c / (k + 1) as f64
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PrimalDualState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub sigma: f64,
}

impl PrimalDualState {
    /// `x = a`, `y = D a`, `z = a`, zero multipliers.
    pub fn initial(spec: &ProblemSpec, sigma: f64) -> Result<Self> {
        let x = spec.a().to_vec();
        Ok(PrimalDualState {
            y: spec.apply_d(&x)?,
            z: x.clone(),
            v: vec![0.0; spec.edge_len()],
            w: vec![0.0; spec.primal_len()],
            x,
            sigma,
        })
    }

    pub fn check(&self, spec: &ProblemSpec) -> Result<()> {
        check_len(spec.primal_len(), self.x.len())?;
        check_len(spec.edge_len(), self.y.len())?;
        check_len(spec.primal_len(), self.z.len())?;
        check_len(spec.edge_len(), self.v.len())?;
        check_len(spec.primal_len(), self.w.len())?;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        [&self.x, &self.y, &self.z, &self.v, &self.w]
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
            && self.sigma.is_finite()
    }
}

/// `1/2 ||x - a||^2 + g(D x) + h(x)`
pub fn primal_objective(spec: &ProblemSpec, x: &[f64]) -> Result<f64> {
    check_len(spec.primal_len(), x.len())?;
    let fit = 0.5 * linalg::norm_sq(&linalg::sub(x, spec.a()));
    Ok(fit + spec.g_value(&spec.apply_d(x)?)? + spec.h_value(x)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DualValue {
    Feasible { value: f64 },
    /// Largest amount by which a multiplier block leaves its dual-norm ball.
    Infeasible { violation: f64 },
}

impl DualValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            DualValue::Feasible { value } => Some(*value),
            DualValue::Infeasible { .. } => None,
        }
    }
}

const DUAL_FEAS_REL: f64 = 1e-10;

/// `-1/2 ||D^T v + w - a||^2 + 1/2 ||a||^2` when `||v_l|| <= gamma1 w_l` and
/// `||W_i||_2 <= gamma2`.
pub fn dual_objective(spec: &ProblemSpec, v: &[f64], w: &[f64]) -> Result<DualValue> {
    check_len(spec.edge_len(), v.len())?;
    check_len(spec.primal_len(), w.len())?;
    let d = spec.d();
    let mut violation: f64 = 0.0;
    if spec.num_edges() > 0 {
        for (b, wl) in v.chunks_exact(d).zip(spec.graph().weights()) {
            let radius = spec.gamma1 * wl;
            let excess = linalg::norm(b) - radius;
            if excess > DUAL_FEAS_REL * radius.max(1.0) {
                violation = violation.max(excess);
            }
        }
    }
    for b in w.chunks_exact(d) {
        let s = linalg::singular_values(block_to_matrix(b, spec.d1(), spec.d2()))?;
        let top = s.iter().cloned().fold(0.0, f64::max);
        let excess = top - spec.gamma2;
        if excess > DUAL_FEAS_REL * spec.gamma2.max(1.0) {
            violation = violation.max(excess);
        }
    }
    if violation > 0.0 {
        return Ok(DualValue::Infeasible { violation });
    }
    let mut r = spec.apply_dt(v)?;
    linalg::axpy(1.0, w, &mut r);
    linalg::axpy(-1.0, spec.a(), &mut r);
    Ok(DualValue::Feasible {
        value: -0.5 * linalg::norm_sq(&r) + 0.5 * linalg::norm_sq(spec.a()),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResidual {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub r5: f64,
    pub max: f64,
}

pub fn kkt_residual(spec: &ProblemSpec, state: &PrimalDualState) -> Result<KktResidual> {
    state.check(spec)?;
    let PrimalDualState { x, y, z, v, w, .. } = state;
    let mut stat = spec.apply_dt(v)?;
    linalg::axpy(1.0, x, &mut stat);
    linalg::axpy(-1.0, spec.a(), &mut stat);
    linalg::axpy(1.0, w, &mut stat);
    let r1 = linalg::norm(&stat) / (1.0 + linalg::norm(spec.a()));

    let py = spec.prox_g(&linalg::add(v, y), 1.0)?;
    let r2 = linalg::norm(&linalg::sub(y, &py)) / (1.0 + linalg::norm(y));
    let pz = spec.prox_h(&linalg::add(w, z), 1.0)?;
    let r3 = linalg::norm(&linalg::sub(z, &pz)) / (1.0 + linalg::norm(z));

    let dx = spec.apply_d(x)?;
    let r4 = linalg::norm(&linalg::sub(&dx, y)) / (1.0 + linalg::norm(y));
    let r5 = linalg::norm(&linalg::sub(x, z)) / (1.0 + linalg::norm(x));
    let max = r1.max(r2).max(r3).max(r4).max(r5);
    Ok(KktResidual {
        r1,
        r2,
        r3,
        r4,
        r5,
        max,
    })
}
