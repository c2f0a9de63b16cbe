//! Reference solver: Douglas-Rachford splitting on the lifted variables
//! `(x, y, z)` with `f = 1/2||x - a||^2 + g(y) + h(z)` and the indicator of
//! the consensus set `{(x, D x, x)}`. Slow and simple on purpose.

use nalgebra::DMatrix;

use super::problem::ProblemSpec;
use crate::error::{Error, Result};
use crate::linalg;

pub const ORACLE_MAX_DIM: usize = 5000;
pub const ORACLE_DEFAULT_CAP: usize = 2_000_000;

#[derive(Clone, Debug)]
pub struct OracleOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Norm of the last change in the governing sequence.
    pub change: f64,
}

pub fn oracle_solve(spec: &ProblemSpec, tol: f64) -> Result<Vec<f64>> {
    Ok(oracle_solve_with(spec, tol, 1.0, ORACLE_DEFAULT_CAP)?.x)
}

pub fn oracle_solve_with(spec: &ProblemSpec, tol: f64, step: f64, cap: usize) -> Result<OracleOutcome> {
    let n = spec.n();
    let d = spec.d();
    if n * d > ORACLE_MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "oracle is limited to {ORACLE_MAX_DIM} unknowns, got {}",
            n * d
        )));
    }
    if !(step > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidArgument("step and tolerance must be positive".into()));
    }
    // 2I + D^T D, with D^T D the unweighted Laplacian acting per entry.
    let mut m = DMatrix::<f64>::identity(n, n) * 2.0;
    for &(i, j) in spec.graph().edges() {
        m[(i, i)] += 1.0;
        m[(j, j)] += 1.0;
        m[(i, j)] -= 1.0;
        m[(j, i)] -= 1.0;
    }
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("consensus system is not positive definite".into()))?;
    let project = |p: &[f64], q: &[f64], r: &[f64]| -> Result<Vec<f64>> {
        let mut rhs = spec.apply_dt(q)?;
        linalg::axpy(1.0, p, &mut rhs);
        linalg::axpy(1.0, r, &mut rhs);
        let sol = chol.solve(&DMatrix::from_row_slice(n, d, &rhs));
        let mut x = vec![0.0; n * d];
        linalg::matrix_to_block(&sol, &mut x);
        Ok(x)
    };

    let a = spec.a();
    let mut p = a.to_vec();
    let mut q = spec.apply_d(a)?;
    let mut r = a.to_vec();
    let mut change = f64::INFINITY;
    for it in 1..=cap {
        let x = project(&p, &q, &r)?;
        let dx = spec.apply_d(&x)?;
        // Reflection 2X - Z followed by the prox of t f.
        let rp: Vec<f64> = x.iter().zip(&p).map(|(xi, pi)| 2.0 * xi - pi).collect();
        let rq: Vec<f64> = dx.iter().zip(&q).map(|(di, qi)| 2.0 * di - qi).collect();
        let rr: Vec<f64> = x.iter().zip(&r).map(|(xi, ri)| 2.0 * xi - ri).collect();
        let yp: Vec<f64> = rp.iter().zip(a).map(|(v, ai)| (v + step * ai) / (1.0 + step)).collect();
        let yq = spec.prox_g(&rq, step)?;
        let yr = spec.prox_h(&rr, step)?;
        let mut sq = 0.0;
        for (zi, (yi, xi)) in p.iter_mut().zip(yp.iter().zip(&x)) {
            *zi += yi - xi;
            sq += (yi - xi) * (yi - xi);
        }
        for (zi, (yi, xi)) in q.iter_mut().zip(yq.iter().zip(&dx)) {
            *zi += yi - xi;
            sq += (yi - xi) * (yi - xi);
        }
        for (zi, (yi, xi)) in r.iter_mut().zip(yr.iter().zip(&x)) {
            *zi += yi - xi;
            sq += (yi - xi) * (yi - xi);
        }
        change = sq.sqrt();
        if !change.is_finite() {
            return Err(Error::NonFiniteState { iteration: it });
        }
        if change <= tol {
            return Ok(OracleOutcome {
                x: project(&p, &q, &r)?,
                iterations: it,
                change,
            });
        }
    }
    let _ = change;
    Err(Error::IterationCap { cap })
}
