//! Augmented Lagrangian solver with a semismooth Newton-CG inner loop.

pub mod alm;
pub mod extract;
pub mod oracle;
pub mod path;
pub mod problem;
pub mod ssn;

pub use alm::{alm_solve, alm_solve_with, OuterRecord, SolveReport};
pub use extract::{extract_clusters, ClusteringResult};
pub use oracle::{oracle_solve, oracle_solve_with, OracleOutcome};
pub use path::{clusterpath, PathPoint};
pub use problem::{
    dual_objective, kkt_residual, primal_objective, DualValue, KktResidual, PrimalDualState,
    ProblemSpec, SolverOptions,
};
pub use ssn::{
    cg_solve, generalized_hessian, phi_evaluate, phi_gradient, phi_value, ssncg, CgOutcome,
    GeneralizedHessian, PhiEval, SsnOptions, SsnOutcome, SsnProbe,
};
