use serde::{Deserialize, Serialize};

use crate::topology::GridTopology;

use super::{check_neighbors, BaselineError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FjConfig {
    /// Innate opinions `s`, each in `[-1, 1]`.
    pub innate: Vec<f64>,
    /// Unweighted adjacency lists.
    pub neighbors: Vec<Vec<usize>>,
    /// `λ` in `[0, 1]`.
    pub susceptibility: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl FjConfig {
    pub const DEFAULT_TOLERANCE: f64 = 1e-12;
    pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

    pub fn new(innate: Vec<f64>, neighbors: Vec<Vec<usize>>, susceptibility: f64) -> Self {
        FjConfig {
            innate,
            neighbors,
            susceptibility,
            max_iterations: Self::DEFAULT_MAX_ITERATIONS,
            tolerance: Self::DEFAULT_TOLERANCE,
        }
    }

    pub fn on_grid(topo: &GridTopology, innate: Vec<f64>, susceptibility: f64) -> Self {
        Self::new(innate, topo.adjacency(), susceptibility)
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.innate.len() != self.neighbors.len() {
            return Err(BaselineError::DimensionMismatch {
                expected: self.neighbors.len(),
                got: self.innate.len(),
            });
        }
        check_neighbors(&self.neighbors)?;
        if !(0.0..=1.0).contains(&self.susceptibility) {
            return Err(BaselineError::InvalidParameter(format!(
                "susceptibility {} outside [0, 1]",
                self.susceptibility
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(BaselineError::InvalidParameter(format!(
                "tolerance {} must be positive",
                self.tolerance
            )));
        }
        if let Some(s) = self.innate.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
            return Err(BaselineError::InvalidParameter(format!(
                "innate opinion {s} outside [-1, 1]"
            )));
        }
        Ok(())
    }
}

/// One synchronous update of every node.
pub fn fj_step(state: &[f64], config: &FjConfig) -> Result<Vec<f64>, BaselineError> {
    if state.len() != config.innate.len() || state.len() != config.neighbors.len() {
        return Err(BaselineError::DimensionMismatch {
            expected: config.innate.len(),
            got: state.len(),
        });
    }
    check_neighbors(&config.neighbors)?;
    let lambda = config.susceptibility;
    Ok(config
        .innate
        .iter()
        .zip(&config.neighbors)
        .map(|(&s, nbrs)| {
            if nbrs.is_empty() || lambda == 0.0 {
                return s;
            }
            let sum: f64 = nbrs.iter().map(|&j| state[j]).sum();
            ((s + lambda * sum) / (1.0 + lambda * nbrs.len() as f64)).clamp(-1.0, 1.0)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FjSolution {
    pub opinions: Vec<f64>,
    pub iterations: usize,
    /// Last sup-norm step size.
    pub residual: f64,
}

/// Iterates from `z = s` until one step moves no entry by `tolerance` or more.
pub fn fj_fixed_point(config: &FjConfig) -> Result<FjSolution, BaselineError> {
    config.validate()?;
    let mut z = config.innate.clone();
    let mut residual = f64::INFINITY;
    for k in 1..=config.max_iterations {
        let next = fj_step(&z, config)?;
        residual = sup_distance(&next, &z);
        z = next;
        if residual < config.tolerance {
            return Ok(FjSolution {
                opinions: z,
                iterations: k,
                residual,
            });
        }
    }
    Err(BaselineError::NotConverged {
        iterations: config.max_iterations,
        residual,
    })
}

/// `[s, z_1, ..., z_steps]`.
pub fn fj_trajectory(config: &FjConfig, steps: usize) -> Result<Vec<Vec<f64>>, BaselineError> {
    config.validate()?;
    let mut out = vec![config.innate.clone()];
    for _ in 0..steps {
        let next = fj_step(out.last().unwrap(), config)?;
        out.push(next);
    }
    Ok(out)
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pair(s: Vec<f64>, lambda: f64) -> FjConfig {
        FjConfig::new(s, vec![vec![1], vec![0]], lambda)
    }

    #[test]
    fn two_node_clique_fixed_point() {
        // z1 = (1 + z2) / 2, z2 = (-1 + z1) / 2  =>  z1 = 1/3, z2 = -1/3
        let sol = fj_fixed_point(&pair(vec![1.0, -1.0], 1.0)).unwrap();
        assert_abs_diff_eq!(sol.opinions[0], 1.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.opinions[1], -1.0 / 3.0, epsilon = 1e-9);
        assert!(sol.residual < 1e-12);
    }

    #[test]
    fn zero_susceptibility_returns_innate() {
        let topo = GridTopology::default();
        let s: Vec<f64> = (0..25).map(|i| ((i * 7) % 11) as f64 / 5.0 - 1.0).collect();
        let cfg = FjConfig::on_grid(&topo, s.clone(), 0.0);
        let z = vec![0.5; 25];
        assert_eq!(fj_step(&z, &cfg).unwrap(), s);
        assert_eq!(fj_fixed_point(&cfg).unwrap().opinions, s);
    }

    #[test]
    fn isolated_node_keeps_innate() {
        let cfg = FjConfig::new(vec![0.25, 1.0, -1.0], vec![vec![], vec![2], vec![1]], 1.0);
        assert_eq!(fj_step(&[0.9, 0.0, 0.0], &cfg).unwrap()[0], 0.25);
    }

    #[test]
    fn consensus_is_fixed() {
        let topo = GridTopology::default();
        let cfg = FjConfig::on_grid(&topo, vec![-0.4; 25], 0.8);
        let sol = fj_fixed_point(&cfg).unwrap();
        assert!(sol.opinions.iter().all(|&z| (z + 0.4).abs() < 1e-12));
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(matches!(
            pair(vec![1.0], 1.0).validate(),
            Err(BaselineError::DimensionMismatch { .. })
        ));
        assert!(pair(vec![1.0, -1.0], 1.5).validate().is_err());
        assert!(pair(vec![1.0, -2.0], 0.5).validate().is_err());
        let mut c = pair(vec![1.0, -1.0], 0.5);
        c.tolerance = 0.0;
        assert!(c.validate().is_err());
        assert!(matches!(
            FjConfig::new(vec![0.0], vec![vec![3]], 0.5).validate(),
            Err(BaselineError::InvalidNeighbor { index: 3, len: 1 })
        ));
        assert!(fj_step(&[0.0], &pair(vec![1.0, -1.0], 0.5)).is_err());
    }

    #[test]
    fn reports_non_convergence() {
        let mut c = pair(vec![1.0, -1.0], 1.0);
        c.max_iterations = 3;
        assert!(matches!(
            fj_fixed_point(&c),
            Err(BaselineError::NotConverged { iterations: 3, .. })
        ));
    }
}
