//! Semismooth Newton-CG on the ALM subproblem
//! `phi(x) = min_{y,z} L_sigma(x, y, z; v~, w~)`.

use serde::{Deserialize, Serialize};

use super::problem::{ProblemSpec, SolverOptions};
use crate::error::{Error, Result};
use crate::linalg::{self, block_to_matrix, check_len, matrix_to_block};
use crate::prox::{nuclear_jacobian, svt, BlockThresholdJacobian, NuclearJacobian};

/// Value, gradient and the minimizing `(y, z)` of `phi` at one point.
#[derive(Clone, Debug)]
pub struct PhiEval {
    pub value: f64,
    pub grad: Vec<f64>,
    /// `Prox_{g/sigma}(D x + v~/sigma)`
    pub y: Vec<f64>,
    /// `Prox_{h/sigma}(x + w~/sigma)`
    pub z: Vec<f64>,
    /// `||D x - y||`
    pub edge_gap: f64,
    /// `||x - z||`
    pub sample_gap: f64,
    /// Sum of magnitudes of the terms in `value`, a roundoff yardstick.
    pub scale: f64,
}

impl PhiEval {
    pub fn grad_norm(&self) -> f64 {
        linalg::norm(&self.grad)
    }

    /// `||(D x - y, x - z)||`
    pub fn feasibility(&self) -> f64 {
        self.edge_gap.hypot(self.sample_gap)
    }
}

/// One element of the generalized Hessian
/// `I + sigma D^T (I - W) D + sigma (I - Q)` with cached Jacobian pieces.
pub struct GeneralizedHessian<'a> {
    spec: &'a ProblemSpec,
    sigma: f64,
    edges: Vec<BlockThresholdJacobian>,
    /// `None` when the nuclear penalty is zero and `Q` is the identity.
    samples: Option<Vec<NuclearJacobian>>,
}

impl<'a> GeneralizedHessian<'a> {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn apply(&self, d: &[f64]) -> Result<Vec<f64>> {
        let spec = self.spec;
        check_len(spec.primal_len(), d.len())?;
        if self.edges.len() != spec.num_edges() {
            return Err(Error::Dimension("stale edge Jacobian cache".into()));
        }
        let dim = spec.d();
        let mut out = d.to_vec();
        if spec.num_edges() > 0 {
            let dd = spec.apply_d(d)?;
            let mut t = dd.clone();
            for (l, jac) in self.edges.iter().enumerate() {
                let range = l * dim..(l + 1) * dim;
                jac.apply_add(&dd[range.clone()], -1.0, &mut t[range]);
            }
            let back = spec.apply_dt(&t)?;
            linalg::axpy(self.sigma, &back, &mut out);
        }
        if let Some(samples) = &self.samples {
            if samples.len() != spec.n() {
                return Err(Error::Dimension("stale sample Jacobian cache".into()));
            }
            let mut t = d.to_vec();
            for (i, jac) in samples.iter().enumerate() {
                let range = i * dim..(i + 1) * dim;
                jac.apply_block_add(&d[range.clone()], -1.0, &mut t[range])?;
            }
            linalg::axpy(self.sigma, &t, &mut out);
        }
        Ok(out)
    }
}

fn check_sub_args(spec: &ProblemSpec, x: &[f64], vt: &[f64], wt: &[f64], sigma: f64) -> Result<()> {
    check_len(spec.primal_len(), x.len())?;
    check_len(spec.edge_len(), vt.len())?;
    check_len(spec.primal_len(), wt.len())?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma = {sigma} must be positive")));
    }
    Ok(())
}

/// Evaluates `phi`, its gradient and (optionally) a Hessian element.
pub fn phi_evaluate<'a>(
    spec: &'a ProblemSpec,
    x: &[f64],
    vt: &[f64],
    wt: &[f64],
    sigma: f64,
    with_hessian: bool,
) -> Result<(PhiEval, Option<GeneralizedHessian<'a>>)> {
    check_sub_args(spec, x, vt, wt, sigma)?;
    let dim = spec.d();
    let (d1, d2) = (spec.d1(), spec.d2());
    let inv = 1.0 / sigma;

    // u = D x + v~/sigma, y = Prox_{g/sigma}(u)
    let mut u = spec.apply_d(x)?;
    linalg::axpy(inv, vt, &mut u);
    let y = spec.prox_g(&u, inv)?;
    let mut edges = Vec::new();
    if with_hessian {
        edges.reserve(spec.num_edges());
        for (b, w) in u.chunks_exact(dim.max(1)).zip(spec.graph().weights()) {
            edges.push(BlockThresholdJacobian::new(b, inv * spec.gamma1 * w));
        }
    }

    // s = x + w~/sigma, z = Prox_{h/sigma}(s)
    let mut s = x.to_vec();
    linalg::axpy(inv, wt, &mut s);
    let thresh = inv * spec.gamma2;
    let mut z = vec![0.0; s.len()];
    let mut samples = None;
    if thresh == 0.0 {
        z.copy_from_slice(&s);
    } else {
        let mut jacs = Vec::new();
        for (src, dst) in s.chunks_exact(dim).zip(z.chunks_exact_mut(dim)) {
            let (p, fact) = svt(&block_to_matrix(src, d1, d2), thresh)?;
            matrix_to_block(&p, dst);
            if with_hessian {
                jacs.push(nuclear_jacobian(&fact));
            }
        }
        if with_hessian {
            samples = Some(jacs);
        }
    }

    let fit = 0.5 * linalg::norm_sq(&linalg::sub(x, spec.a()));
    let ru = linalg::sub(&u, &y);
    let rs = linalg::sub(&s, &z);
    let gy = spec.g_value(&y)?;
    let hz = spec.h_value(&z)?;
    let env_u = 0.5 * sigma * linalg::norm_sq(&ru);
    let env_s = 0.5 * sigma * linalg::norm_sq(&rs);
    let shift = 0.5 * inv * (linalg::norm_sq(vt) + linalg::norm_sq(wt));
    let value = fit + gy + env_u + hz + env_s - shift;
    let scale = fit + gy + env_u + hz + env_s + shift;

    let mut grad = linalg::sub(x, spec.a());
    if spec.num_edges() > 0 {
        linalg::axpy(sigma, &spec.apply_dt(&ru)?, &mut grad);
    }
    linalg::axpy(sigma, &rs, &mut grad);

    let dx = spec.apply_d(x)?;
    let edge_gap = linalg::norm(&linalg::sub(&dx, &y));
    let sample_gap = linalg::norm(&linalg::sub(x, &z));

    let eval = PhiEval {
        value,
        grad,
        y,
        z,
        edge_gap,
        sample_gap,
        scale,
    };
    let hess = with_hessian.then(|| GeneralizedHessian {
        spec,
        sigma,
        edges,
        samples: if thresh == 0.0 { None } else { samples },
    });
    Ok((eval, hess))
}

pub fn phi_value(spec: &ProblemSpec, x: &[f64], vt: &[f64], wt: &[f64], sigma: f64) -> Result<f64> {
    Ok(phi_evaluate(spec, x, vt, wt, sigma, false)?.0.value)
}

pub fn phi_gradient(spec: &ProblemSpec, x: &[f64], vt: &[f64], wt: &[f64], sigma: f64) -> Result<Vec<f64>> {
    Ok(phi_evaluate(spec, x, vt, wt, sigma, false)?.0.grad)
}

pub fn generalized_hessian<'a>(
    spec: &'a ProblemSpec,
    x: &[f64],
    vt: &[f64],
    wt: &[f64],
    sigma: f64,
) -> Result<GeneralizedHessian<'a>> {
    Ok(phi_evaluate(spec, x, vt, wt, sigma, true)?
        .1
        .expect("requested Hessian"))
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub direction: Vec<f64>,
    pub iterations: usize,
    /// `||grad + H d||` at exit.
    pub residual: f64,
    /// False when the iteration cap was hit before the tolerance.
    pub converged: bool,
}

/// Conjugate gradient for `H d = -grad`, stopping once
/// `||grad + H d|| <= tol`. On hitting `cap` the iterate with the smallest
/// residual is returned with `converged = false`.
pub fn cg_solve<F>(mut op: F, grad: &[f64], tol: f64, cap: usize) -> Result<CgOutcome>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = grad.len();
    let mut d = vec![0.0; n];
    let mut r: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut rr = linalg::norm_sq(&r);
    let mut best = (rr.sqrt(), d.clone());
    if rr.sqrt() <= tol {
        return Ok(CgOutcome {
            direction: d,
            iterations: 0,
            residual: rr.sqrt(),
            converged: true,
        });
    }
    let mut p = r.clone();
    for it in 1..=cap {
        let hp = op(&p)?;
        let php = linalg::dot(&p, &hp);
        if !(php > 0.0) || !php.is_finite() {
            return Err(Error::CgBreakdown { iteration: it });
        }
        let alpha = rr / php;
        linalg::axpy(alpha, &p, &mut d);
        linalg::axpy(-alpha, &hp, &mut r);
        let rr_new = linalg::norm_sq(&r);
        if !rr_new.is_finite() {
            return Err(Error::CgBreakdown { iteration: it });
        }
        let res = rr_new.sqrt();
        if res <= tol {
            return Ok(CgOutcome {
                direction: d,
                iterations: it,
                residual: res,
                converged: true,
            });
        }
        if res < best.0 {
            best = (res, d.clone());
        }
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    Ok(CgOutcome {
        direction: best.1,
        iterations: cap,
        residual: best.0,
        converged: false,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SsnOptions {
    pub mu_bar: f64,
    pub tau_bar: f64,
    pub gamma_bar: f64,
    pub delta_bar: f64,
    pub cg_cap: usize,
    pub max_newton: usize,
    pub max_backtracks: usize,
}

impl From<&SolverOptions> for SsnOptions {
    fn from(o: &SolverOptions) -> Self {
        SsnOptions {
            mu_bar: o.mu_bar,
            tau_bar: o.tau_bar,
            gamma_bar: o.gamma_bar,
            delta_bar: o.delta_bar,
            cg_cap: o.cg_cap,
            max_newton: o.max_newton,
            max_backtracks: 50,
        }
    }
}

impl Default for SsnOptions {
    fn default() -> Self {
        SsnOptions::from(&SolverOptions::default())
    }
}

/// What the exit test sees at each Newton iterate.
#[derive(Clone, Copy, Debug)]
pub struct SsnProbe {
    pub iteration: usize,
    pub grad_norm: f64,
    /// `||(D x - y, x - z)||`
    pub feasibility: f64,
}

#[derive(Clone, Debug)]
pub struct SsnOutcome {
    pub x: Vec<f64>,
    pub eval: PhiEval,
    pub iterations: usize,
    pub cg_iterations: Vec<usize>,
    /// Gradient norm at every iterate, starting point included.
    pub grad_norms: Vec<f64>,
    pub phi_values: Vec<f64>,
    /// Residual `||grad + H d||` and its target at each Newton step.
    pub cg_residuals: Vec<(f64, f64)>,
    /// CG solves that stopped at the iteration cap.
    pub cg_capped: usize,
    /// False when the Newton iteration cap ended the loop.
    pub converged: bool,
}

// Relative roundoff allowance in the Armijo test, measured against the sum of
// term magnitudes in phi.
const ARMIJO_SLACK: f64 = 1e-13;

pub fn ssncg<F>(
    spec: &ProblemSpec,
    x0: &[f64],
    vt: &[f64],
    wt: &[f64],
    sigma: f64,
    opts: &SsnOptions,
    mut exit: F,
) -> Result<SsnOutcome>
where
    F: FnMut(&SsnProbe) -> bool,
{
    let mut x = x0.to_vec();
    let (mut eval, mut hess) = phi_evaluate(spec, &x, vt, wt, sigma, true)?;
    let mut out = SsnOutcome {
        x: Vec::new(),
        eval: eval.clone(),
        iterations: 0,
        cg_iterations: Vec::new(),
        grad_norms: vec![eval.grad_norm()],
        phi_values: vec![eval.value],
        cg_residuals: Vec::new(),
        cg_capped: 0,
        converged: false,
    };
    for j in 0.. {
        let gnorm = eval.grad_norm();
        let probe = SsnProbe {
            iteration: j,
            grad_norm: gnorm,
            feasibility: eval.feasibility(),
        };
        if exit(&probe) {
            out.converged = true;
            break;
        }
        if j >= opts.max_newton {
            break;
        }
        let h = hess.take().expect("Hessian at accepted iterate");
        let target = opts.gamma_bar.min(gnorm.powf(1.0 + opts.tau_bar));
        let cg = cg_solve(|p| h.apply(p), &eval.grad, target, opts.cg_cap)?;
        out.cg_iterations.push(cg.iterations);
        out.cg_residuals.push((cg.residual, target));
        if !cg.converged {
            out.cg_capped += 1;
        }
        let slope = linalg::dot(&eval.grad, &cg.direction);
        if !(slope < 0.0) {
            return Err(Error::LineSearch {
                iteration: j,
                backtracks: 0,
            });
        }
        let slack = ARMIJO_SLACK * eval.scale;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let mut trial = x.clone();
            linalg::axpy(t, &cg.direction, &mut trial);
            let (te, th) = phi_evaluate(spec, &trial, vt, wt, sigma, true)?;
            if te.value <= eval.value + opts.mu_bar * t * slope + slack {
                accepted = Some((trial, te, th));
                break;
            }
            t *= opts.delta_bar;
        }
        let Some((nx, ne, nh)) = accepted else {
            return Err(Error::LineSearch {
                iteration: j,
                backtracks: opts.max_backtracks,
            });
        };
        x = nx;
        eval = ne;
        hess = nh;
        out.iterations = j + 1;
        out.grad_norms.push(eval.grad_norm());
        out.phi_values.push(eval.value);
    }
    out.x = x;
    out.eval = eval;
    Ok(out)
}
