//! Classical opinion-dynamics models used as numerical oracles and
//! comparison baselines.
//!
//! * Friedkin-Johnsen: each node is anchored to an innate opinion `s` and
//!   pulled toward its neighbors with a global susceptibility `λ`,
//!   `z_i' = (s_i + λ Σ_j z_j) / (1 + λ |N_i|)`, on `[-1, 1]`.
//! * Deffuant bounded confidence: a random pair moves toward each other by
//!   `μ` of their gap when the gap is below `ε`, on `[0, 1]`.

mod bc;
mod fj;

use thiserror::Error;

pub use bc::{
    bc_interact, bc_simulate, bc_step, from_signed, to_signed, BcConfig, BcRun, Pairing,
};
pub use fj::{fj_fixed_point, fj_step, fj_trajectory, FjConfig, FjSolution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("expected {expected} opinions, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("neighbor index {index} out of range for {len} nodes")]
    InvalidNeighbor { index: usize, len: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
}

fn check_neighbors(neighbors: &[Vec<usize>]) -> Result<(), BaselineError> {
    let len = neighbors.len();
    for list in neighbors {
        if let Some(&index) = list.iter().find(|&&j| j >= len) {
            return Err(BaselineError::InvalidNeighbor { index, len });
        }
    }
    Ok(())
}
