use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::alm::{alm_solve_with, SolveReport};
use super::extract::{extract_clusters, ClusteringResult};
use super::problem::{PrimalDualState, ProblemSpec, SolverOptions};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathPoint {
    pub gamma1: f64,
    pub gamma2: f64,
    pub clustering: Option<ClusteringResult>,
    pub report: Option<SolveReport>,
    pub error: Option<String>,
}

fn solve_row(
    template: &ProblemSpec,
    gamma1_grid: &[f64],
    gamma2: f64,
    options: &SolverOptions,
) -> Vec<PathPoint> {
    let mut warm: Option<PrimalDualState> = None;
    let mut row = Vec::with_capacity(gamma1_grid.len());
    for &g1 in gamma1_grid {
        let outcome = template.with_gammas(g1, gamma2).and_then(|spec| {
            let (state, report) = alm_solve_with(&spec, options, warm.as_ref(), None)?;
            let clustering = extract_clusters(&spec, &state, options.merge_tol)?;
            Ok((state, clustering, report))
        });
        row.push(match outcome {
            Ok((state, clustering, report)) => {
                warm = Some(state);
                PathPoint {
                    gamma1: g1,
                    gamma2,
                    clustering: Some(clustering),
                    report: Some(report),
                    error: None,
                }
            }
            Err(e) => PathPoint {
                gamma1: g1,
                gamma2,
                clustering: None,
                report: None,
                error: Some(e.to_string()),
            },
        });
    }
    row
}

/// Solves every `(gamma1, gamma2)` grid point. Within a `gamma2` row the
/// solves run in ascending `gamma1` order, each warm-started from the last
/// successful one; rows are spread over `workers` threads. Output is ordered
/// by `gamma2` row, then `gamma1`.
pub fn clusterpath(
    template: &ProblemSpec,
    gamma1_grid: &[f64],
    gamma2_grid: &[f64],
    options: &SolverOptions,
    workers: usize,
) -> Result<Vec<PathPoint>> {
    if gamma1_grid.is_empty() || gamma2_grid.is_empty() {
        return Err(Error::InvalidArgument("grids must be nonempty".into()));
    }
    if gamma1_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidArgument("gamma1 grid must be ascending".into()));
    }
    options.validate()?;
    let rows: Vec<Mutex<Option<Vec<PathPoint>>>> = gamma2_grid.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = workers.clamp(1, gamma2_grid.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let r = next.fetch_add(1, Ordering::Relaxed);
                if r >= gamma2_grid.len() {
                    break;
                }
                let row = solve_row(template, gamma1_grid, gamma2_grid[r], options);
                *rows[r].lock().expect("row lock") = Some(row);
            });
        }
    });
    Ok(rows
        .into_iter()
        .flat_map(|m| m.into_inner().expect("row lock").expect("row solved"))
        .collect())
}
