//! Polarization index and neighbors correlation index.
//!
//! For expressed opinions z in {-1, 0, 1}^N:
//!
//! * polarization index: population variance `(1/N) * sum (z_i - mean)^2`;
//! * neighbor average: `n_i = mean of z_j over the lattice neighbors j of i`;
//! * NCI: Pearson correlation of `z` and `n`, undefined when either has zero
//!   variance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Condition, Framing};
use crate::stance::{annotate_run, AnnotateError, Annotator};
use crate::topology::GridTopology;
use crate::transcript::Transcript;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("opinion vector is empty")]
    Empty,
    #[error("vector has {got} entries, topology has {expected} nodes")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("opinion {0} is outside {{-1, 0, 1}}")]
    InvalidOpinion(i8),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpinionVector {
    pub iteration: u32,
    /// Row-major node order.
    pub values: Vec<i8>,
}

impl OpinionVector {
    pub fn new(iteration: u32, values: Vec<i8>) -> Self {
        OpinionVector { iteration, values }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.values.is_empty() {
            return Err(MetricsError::Empty);
        }
        match self.values.iter().find(|v| !(-1..=1).contains(*v)) {
            Some(&bad) => Err(MetricsError::InvalidOpinion(bad)),
            None => Ok(()),
        }
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }
}

/// Population variance of the expressed opinions.
///
/// Entries are integers, so `(N * sum z^2 - (sum z)^2) / N^2` is evaluated in
/// exact integer arithmetic with a single final rounding.
pub fn polarization_index(z: &OpinionVector) -> Result<f64, MetricsError> {
    z.validate()?;
    let n = z.values.len() as i64;
    let s1: i64 = z.values.iter().map(|&v| v as i64).sum();
    let s2: i64 = z.values.iter().map(|&v| (v as i64) * (v as i64)).sum();
    Ok((n * s2 - s1 * s1) as f64 / (n * n) as f64)
}

/// Population variance of real-valued opinions (two-pass).
pub fn variance(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Ok(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n)
}

/// Mean of each node's lattice-neighbor opinions. A node without neighbors
/// (1x1 grid) gets its own value.
pub fn neighbor_average_values(z: &[f64], topo: &GridTopology) -> Result<Vec<f64>, MetricsError> {
    if z.len() != topo.node_count() {
        return Err(MetricsError::DimensionMismatch {
            expected: topo.node_count(),
            got: z.len(),
        });
    }
    Ok(topo
        .adjacency()
        .iter()
        .enumerate()
        .map(|(i, nbrs)| {
            if nbrs.is_empty() {
                z[i]
            } else {
                nbrs.iter().map(|&j| z[j]).sum::<f64>() / nbrs.len() as f64
            }
        })
        .collect())
}

pub fn neighbor_average(z: &OpinionVector, topo: &GridTopology) -> Result<Vec<f64>, MetricsError> {
    z.validate()?;
    neighbor_average_values(&z.as_f64(), topo)
}

/// Pearson correlation, `None` when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.is_empty() {
        return None;
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Neighbors correlation index over real-valued opinions.
pub fn nci_values(z: &[f64], topo: &GridTopology) -> Result<Option<f64>, MetricsError> {
    let n = neighbor_average_values(z, topo)?;
    Ok(pearson(z, &n))
}

/// Neighbors correlation index using same-iteration lattice neighbors.
pub fn nci(z: &OpinionVector, topo: &GridTopology) -> Result<Option<f64>, MetricsError> {
    z.validate()?;
    nci_values(&z.as_f64(), topo)
}

/// Sensitivity variant: each node's neighbor mean also includes its own
/// opinion at the previous iteration, mirroring what agents were shown.
pub fn nci_with_prior_self(
    z: &OpinionVector,
    prior: &OpinionVector,
    topo: &GridTopology,
) -> Result<Option<f64>, MetricsError> {
    z.validate()?;
    prior.validate()?;
    for v in [z, prior] {
        if v.values.len() != topo.node_count() {
            return Err(MetricsError::DimensionMismatch {
                expected: topo.node_count(),
                got: v.values.len(),
            });
        }
    }
    let n: Vec<f64> = topo
        .adjacency()
        .iter()
        .enumerate()
        .map(|(i, nbrs)| {
            let sum: i32 = nbrs.iter().map(|&j| z.values[j] as i32).sum::<i32>()
                + prior.values[i] as i32;
            sum as f64 / (nbrs.len() + 1) as f64
        })
        .collect();
    Ok(pearson(&z.as_f64(), &n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SeriesModel {
    #[default]
    Experiment,
    Fj,
    Bc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: u32,
    pub polarization: f64,
    /// `None` (serialized as null) when the correlation is undefined.
    pub nci: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSeries {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    #[serde(default)]
    pub model: SeriesModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub framing: Option<Framing>,
    pub records: Vec<MetricsRecord>,
}

impl MetricsSeries {
    pub fn final_record(&self) -> Option<&MetricsRecord> {
        self.records.last()
    }

    pub fn from_vectors(
        vectors: &[OpinionVector],
        topo: &GridTopology,
        options: NciOptions,
    ) -> Result<Self, MetricsError> {
        let mut records = Vec::with_capacity(vectors.len());
        for (k, z) in vectors.iter().enumerate() {
            let nci = match (options.include_prior_self, k) {
                (true, k) if k > 0 => nci_with_prior_self(z, &vectors[k - 1], topo)?,
                _ => nci(z, topo)?,
            };
            records.push(MetricsRecord {
                iteration: z.iteration,
                polarization: polarization_index(z)?,
                nci,
            });
        }
        Ok(MetricsSeries {
            run_id: None,
            model: SeriesModel::Experiment,
            condition: None,
            framing: None,
            records,
        })
    }

    /// Series over real-valued trajectories from the numerical baselines.
    pub fn from_trajectory(
        model: SeriesModel,
        states: &[Vec<f64>],
        topo: &GridTopology,
    ) -> Result<Self, MetricsError> {
        let records = states
            .iter()
            .enumerate()
            .map(|(t, s)| {
                Ok(MetricsRecord {
                    iteration: t as u32,
                    polarization: variance(s)?,
                    nci: nci_values(s, topo)?,
                })
            })
            .collect::<Result<_, MetricsError>>()?;
        Ok(MetricsSeries {
            run_id: None,
            model,
            condition: None,
            framing: None,
            records,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NciOptions {
    /// Add the node's own previous-iteration opinion to its neighbor mean.
    pub include_prior_self: bool,
}

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Metric series through the last fully committed iteration of a run.
pub fn series_for_run(
    transcript: &Transcript,
    annotator: &dyn Annotator,
) -> Result<MetricsSeries, SeriesError> {
    series_for_run_with(transcript, annotator, NciOptions::default())
}

pub fn series_for_run_with(
    transcript: &Transcript,
    annotator: &dyn Annotator,
    options: NciOptions,
) -> Result<MetricsSeries, SeriesError> {
    let annotation = annotate_run(transcript, annotator)?;
    let mut series =
        MetricsSeries::from_vectors(&annotation.vectors, &transcript.topology(), options)?;
    series.run_id = Some(transcript.run_id.clone());
    series.condition = Some(transcript.config.condition);
    series.framing = Some(transcript.config.framing);
    Ok(series)
}
