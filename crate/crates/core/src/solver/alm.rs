use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::problem::{
    dual_objective, kkt_residual, primal_objective, KktResidual, PrimalDualState, ProblemSpec,
    SolverOptions,
};
use super::ssn::{ssncg, SsnOptions};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OuterRecord {
    pub k: usize,
    pub inner_iters: usize,
    pub cg_iters: Vec<usize>,
    /// Gradient norm at each Newton iterate of this subproblem.
    pub grad_norms: Vec<f64>,
    pub kkt: KktResidual,
    pub primal: f64,
    pub dual: Option<f64>,
    pub sigma: f64,
    /// `||(v+ - v, w+ - w)||`
    pub dual_step: f64,
    /// Exit threshold used for this subproblem.
    pub inner_tol: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: Vec<usize>,
    pub cg_iterations: Vec<Vec<usize>>,
    pub history: Vec<OuterRecord>,
    pub kkt: KktResidual,
    pub primal_objective: f64,
    pub dual_objective: Option<f64>,
    /// `(primal - dual) / (1 + |primal| + |dual|)`
    pub duality_gap: Option<f64>,
    pub wall_time_secs: f64,
    pub message: Option<String>,
}

#[derive(Serialize)]
struct TraceLine {
    k: usize,
    inner_iters: usize,
    cg_iters: usize,
    #[serde(rename = "R1")]
    r1: f64,
    #[serde(rename = "R2")]
    r2: f64,
    #[serde(rename = "R3")]
    r3: f64,
    #[serde(rename = "R4")]
    r4: f64,
    #[serde(rename = "R5")]
    r5: f64,
    primal: f64,
    dual: Option<f64>,
    sigma: f64,
}

fn write_trace(out: &mut dyn Write, rec: &OuterRecord) -> Result<()> {
    let line = TraceLine {
        k: rec.k,
        inner_iters: rec.inner_iters,
        cg_iters: rec.cg_iters.iter().sum(),
        r1: rec.kkt.r1,
        r2: rec.kkt.r2,
        r3: rec.kkt.r3,
        r4: rec.kkt.r4,
        r5: rec.kkt.r5,
        primal: rec.primal,
        dual: rec.dual,
        sigma: rec.sigma,
    };
    let s = serde_json::to_string(&line).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    writeln!(out, "{s}").map_err(|e| Error::io("<trace>", e))
}

pub fn alm_solve(spec: &ProblemSpec, options: &SolverOptions) -> Result<(PrimalDualState, SolveReport)> {
    alm_solve_with(spec, options, None, None)
}

/// ALM with an optional warm start `(x, v, w)` and an optional JSONL trace.
pub fn alm_solve_with(
    spec: &ProblemSpec,
    options: &SolverOptions,
    warm: Option<&PrimalDualState>,
    mut trace: Option<&mut dyn Write>,
) -> Result<(PrimalDualState, SolveReport)> {
    options.validate()?;
    let start = Instant::now();
    let mut state = match warm {
        Some(w) => {
            w.check(spec)?;
            PrimalDualState {
                sigma: options.sigma0,
                ..w.clone()
            }
        }
        None => PrimalDualState::initial(spec, options.sigma0)?,
    };
    let ssn_opts = SsnOptions::from(options);
    let floor = options.inner_floor * options.tol * (1.0 + linalg::norm(spec.a()));
    let mut history: Vec<OuterRecord> = Vec::new();
    let mut converged = false;
    let mut kkt = kkt_residual(spec, &state)?;

    for k in 0..options.max_outer {
        let sigma = state.sigma;
        let (eps, delta, delta_p) = (options.eps_k(k), options.delta_k(k), options.delta_prime_k(k));
        let rs = sigma.sqrt();
        let mut used_tol = 0.0;
        let sub = ssncg(spec, &state.x, &state.v, &state.w, sigma, &ssn_opts, |p| {
            let thr = (eps / rs).min(delta * rs * p.feasibility).min(delta_p * p.feasibility);
            used_tol = thr.max(floor);
            p.grad_norm <= used_tol
        })?;

        let x = sub.x;
        let y = sub.eval.y;
        let z = sub.eval.z;
        let dx = spec.apply_d(&x)?;
        let mut v = state.v.clone();
        for ((vi, di), yi) in v.iter_mut().zip(&dx).zip(&y) {
            *vi += sigma * (di - yi);
        }
        let mut w = state.w.clone();
        for ((wi, xi), zi) in w.iter_mut().zip(&x).zip(&z) {
            *wi += sigma * (xi - zi);
        }
        let dual_step = linalg::joint_norm(&linalg::sub(&v, &state.v), &linalg::sub(&w, &state.w));
        state = PrimalDualState {
            x,
            y,
            z,
            v,
            w,
            sigma,
        };
        if !state.is_finite() {
            return Err(Error::NonFiniteState { iteration: k });
        }

        kkt = kkt_residual(spec, &state)?;
        let primal = primal_objective(spec, &state.x)?;
        let dual = dual_objective(spec, &state.v, &state.w)?.value();
        let rec = OuterRecord {
            k,
            inner_iters: sub.iterations,
            cg_iters: sub.cg_iterations,
            grad_norms: sub.grad_norms,
            kkt,
            primal,
            dual,
            sigma,
            dual_step,
            inner_tol: used_tol,
        };
        if let Some(out) = trace.as_deref_mut() {
            write_trace(out, &rec)?;
        }
        history.push(rec);
        if kkt.max <= options.tol {
            converged = true;
            break;
        }
        state.sigma = (sigma * options.rho).min(options.sigma_cap);
    }

    let primal = primal_objective(spec, &state.x)?;
    let dual = dual_objective(spec, &state.v, &state.w)?.value();
    let gap = dual.map(|d| (primal - d) / (1.0 + primal.abs() + d.abs()));
    let report = SolveReport {
        converged,
        outer_iterations: history.len(),
        inner_iterations: history.iter().map(|r| r.inner_iters).collect(),
        cg_iterations: history.iter().map(|r| r.cg_iters.clone()).collect(),
        history,
        kkt,
        primal_objective: primal,
        dual_objective: dual,
        duality_gap: gap,
        wall_time_secs: start.elapsed().as_secs_f64(),
        message: (!converged).then(|| {
            format!(
                "outer iteration cap {} reached with max KKT residual {:.3e}",
                options.max_outer, kkt.max
            )
        }),
    };
    Ok((state, report))
}
