use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use lrcc::solver::SolverOptions;

use crate::error::{CliError, CliResult};

/// Run parameters. Every field can come from the JSON file given by
/// `--config`; flags on the command line take precedence.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// JSON file with default values for any of these options
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Observations (MTS1 file)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Ground-truth labels, one integer per line
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Predicted labels for `eval`
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Class means for `check` (MTS1), in order of first appearance in `--labels`
    #[arg(long)]
    pub means: Option<PathBuf>,
    /// Edge list with `i j w` lines; overrides the k-NN graph
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Neighbors per sample for the k-NN graph
    #[arg(long)]
    pub graph_k: Option<usize>,
    /// Gaussian kernel scale for edge weights; unit weights when absent
    #[arg(long)]
    pub kernel_scale: Option<f64>,

    #[arg(long)]
    pub gamma1: Option<f64>,
    #[arg(long)]
    pub gamma2: Option<f64>,
    /// Comma-separated gamma1 values, ascending
    #[arg(long, value_delimiter = ',')]
    pub gamma1_grid: Option<Vec<f64>>,
    /// Comma-separated gamma2 values
    #[arg(long, value_delimiter = ',')]
    pub gamma2_grid: Option<Vec<f64>>,

    #[arg(long)]
    pub seed: Option<u64>,
    /// KKT tolerance of the solver
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Threads for `path`
    #[arg(long)]
    pub workers: Option<usize>,

    /// quarter-spheres, unbalanced, mixture or recovery
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long)]
    pub n_per: Option<usize>,
    #[arg(long)]
    pub d1: Option<usize>,
    #[arg(long)]
    pub d2: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Number of clusters
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub rank: Option<usize>,
    /// Eight comma-separated cluster sizes for the unbalanced generator
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,

    /// random-assignment or spectral
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub max_iter: Option<usize>,

    /// recovery, asymptotic or prediction
    #[arg(long)]
    pub mode: Option<String>,
    /// Noise scale assumed by `check`
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Ball radius in noise units for asymptotic mode; default sqrt(d1 d2) + 3
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,

    /// Embedding dimension for `embed`
    #[arg(long)]
    pub dims: Option<usize>,
}

fn strip_nulls(v: Value) -> Value {
    match v {
        Value::Object(map) => Value::Object(map.into_iter().filter(|(_, v)| !v.is_null()).collect()),
        other => other,
    }
}

impl Settings {
    /// Overlays the flags onto the config file named by `--config`, if any.
    pub fn resolve(flags: Settings) -> CliResult<Settings> {
        let Some(path) = flags.config.clone() else {
            flags.validate()?;
            return Ok(flags);
        };
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let base: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        if !base.is_object() {
            return Err(CliError::usage(format!("config {} must be a JSON object", path.display())));
        }
        let mut merged = base;
        let over = strip_nulls(serde_json::to_value(&flags).expect("settings serialize"));
        if let (Value::Object(m), Value::Object(o)) = (&mut merged, over) {
            m.extend(o);
        }
        let mut out: Settings = serde_json::from_value(merged)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        out.config = Some(path);
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> CliResult<()> {
        for (name, grid) in [("gamma1-grid", &self.gamma1_grid), ("gamma2-grid", &self.gamma2_grid)] {
            if let Some(g) = grid {
                if g.is_empty() {
                    return Err(CliError::usage(format!("--{name} is empty")));
                }
            }
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn out_dir(&self) -> CliResult<&Path> {
        let dir = self.out.as_deref().ok_or_else(|| CliError::usage("--out is required"))?;
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(dir)
    }

    pub fn require<'a, T>(value: &'a Option<T>, flag: &str) -> CliResult<&'a T> {
        value.as_ref().ok_or_else(|| CliError::usage(format!("--{flag} is required")))
    }

    pub fn solver_options(&self) -> CliResult<SolverOptions> {
        let mut opts = SolverOptions::default();
        if let Some(t) = self.tol {
            opts.tol = t;
        }
        if let Some(m) = self.max_outer {
            opts.max_outer = m;
        }
        opts.validate().map_err(CliError::from)?;
        Ok(opts)
    }
}
