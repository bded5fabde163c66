use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::stance::Stance;
use crate::topology::GridTopology;

use super::{check_neighbors, BaselineError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Any two distinct nodes.
    #[default]
    RandomPair,
    /// A random node and one of its neighbors.
    LatticeNeighbor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcConfig {
    /// `ε >= 0`.
    pub epsilon: f64,
    /// `μ` in `(0, 0.5]`.
    pub mu: f64,
    pub pairing: Pairing,
    /// Adjacency lists; required for [`Pairing::LatticeNeighbor`].
    #[serde(default)]
    pub neighbors: Vec<Vec<usize>>,
    pub rng_seed: u64,
    pub max_steps: usize,
}

impl BcConfig {
    pub fn random_pair(epsilon: f64, mu: f64, rng_seed: u64, max_steps: usize) -> Self {
        BcConfig {
            epsilon,
            mu,
            pairing: Pairing::RandomPair,
            neighbors: Vec::new(),
            rng_seed,
            max_steps,
        }
    }

    pub fn on_grid(topo: &GridTopology, epsilon: f64, mu: f64, rng_seed: u64, max_steps: usize) -> Self {
        BcConfig {
            epsilon,
            mu,
            pairing: Pairing::LatticeNeighbor,
            neighbors: topo.adjacency(),
            rng_seed,
            max_steps,
        }
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        if !(self.epsilon >= 0.0) {
            return Err(BaselineError::InvalidParameter(format!(
                "epsilon {} must be non-negative",
                self.epsilon
            )));
        }
        if !(self.mu > 0.0 && self.mu <= 0.5) {
            return Err(BaselineError::InvalidParameter(format!(
                "mu {} outside (0, 0.5]",
                self.mu
            )));
        }
        check_neighbors(&self.neighbors)
    }

    fn check_state(&self, state: &[f64]) -> Result<(), BaselineError> {
        if self.pairing == Pairing::LatticeNeighbor && state.len() != self.neighbors.len() {
            return Err(BaselineError::DimensionMismatch {
                expected: self.neighbors.len(),
                got: state.len(),
            });
        }
        Ok(())
    }
}

/// Moves `x[i]` and `x[j]` toward each other by `mu` of their gap when the
/// gap is below `epsilon`. Both new values are computed from the old ones.
pub fn bc_interact(x: &mut [f64], i: usize, j: usize, epsilon: f64, mu: f64) {
    let (a, b) = (x[i], x[j]);
    if (a - b).abs() < epsilon {
        x[i] = a + mu * (b - a);
        x[j] = b + mu * (a - b);
    }
}

fn pick_pair(n: usize, config: &BcConfig, rng: &mut impl Rng) -> Option<(usize, usize)> {
    if n < 2 {
        return None;
    }
    let i = rng.gen_range(0..n);
    match config.pairing {
        Pairing::RandomPair => {
            let j = rng.gen_range(0..n - 1);
            Some((i, if j >= i { j + 1 } else { j }))
        }
        Pairing::LatticeNeighbor => {
            let nbrs = &config.neighbors[i];
            if nbrs.is_empty() {
                None
            } else {
                Some((i, nbrs[rng.gen_range(0..nbrs.len())]))
            }
        }
    }
}

/// One interaction event.
pub fn bc_step(state: &[f64], config: &BcConfig, rng: &mut impl Rng) -> Result<Vec<f64>, BaselineError> {
    config.check_state(state)?;
    let mut x = state.to_vec();
    if let Some((i, j)) = pick_pair(x.len(), config, rng) {
        bc_interact(&mut x, i, j, config.epsilon, config.mu);
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcRun {
    pub final_state: Vec<f64>,
    /// State after every `record_every` steps, starting with the initial one.
    pub trajectory: Vec<Vec<f64>>,
    pub steps: usize,
}

/// Runs `config.max_steps` events from `initial` with a ChaCha stream seeded
/// by `config.rng_seed`.
pub fn bc_simulate(
    initial: &[f64],
    config: &BcConfig,
    record_every: usize,
) -> Result<BcRun, BaselineError> {
    config.validate()?;
    config.check_state(initial)?;
    if let Some(x) = initial.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(BaselineError::InvalidParameter(format!("opinion {x} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut x = initial.to_vec();
    let mut trajectory = vec![x.clone()];
    for step in 1..=config.max_steps {
        if let Some((i, j)) = pick_pair(x.len(), config, &mut rng) {
            bc_interact(&mut x, i, j, config.epsilon, config.mu);
        }
        if record_every > 0 && step % record_every == 0 {
            trajectory.push(x.clone());
        }
    }
    Ok(BcRun {
        final_state: x,
        trajectory,
        steps: config.max_steps,
    })
}

/// `[0, 1] -> [-1, 1]`, `x -> 2x - 1`.
pub fn to_signed(x: f64) -> f64 {
    2.0 * x - 1.0
}

/// Inverse of [`to_signed`]; stances map to `0`, `0.5`, `1`.
pub fn from_signed(z: f64) -> f64 {
    (z + 1.0) / 2.0
}

impl Stance {
    pub fn to_unit(self) -> f64 {
        from_signed(self.value() as f64)
    }
}
