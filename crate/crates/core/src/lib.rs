//! Low-rank convex clustering of matrix-valued samples.

pub mod baseline;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod graph;
pub mod linalg;
pub mod prox;
pub mod solver;
pub mod theory;

pub use error::{Error, Result};
