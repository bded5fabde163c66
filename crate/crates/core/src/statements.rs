//! Statement pool loading and iteration-0 seeding.
//!
//! A pool file is a single JSON document:
//!
//! ```json
//! {
//!   "question": "Does red meat cause cancer and cardiovascular disease?",
//!   "statements": [
//!     { "id": "pos-01", "text": "...", "stance": "positive" },
//!     { "id": "neg-01", "text": "...", "stance": "negative" }
//!   ]
//! }
//! ```
//!
//! Every statement needs a unique `id`, non-empty `text` and a stance of
//! `"positive"` or `"negative"`. A pool must hold as many positive as negative
//! statements.

use std::collections::HashSet;
use std::io::Read;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{GridTopology, NodeId};

/// Pool shipped with the crate: 12 positive and 12 negative statements on the
/// red meat question.
pub const DEFAULT_POOL_JSON: &str = include_str!("../data/pool_red_meat.json");

/// Upper bound on assignment attempts in [`seed_layout`].
pub const MAX_SEED_STEPS: usize = 10_000;

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("malformed pool file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("failed to read pool: {0}")]
    Io(#[from] std::io::Error),
    #[error("pool must be balanced, found {positive} positive and {negative} negative statements")]
    StanceImbalance { positive: usize, negative: usize },
    #[error("duplicate statement id {0:?}")]
    DuplicateId(String),
    #[error("statement {0:?} has empty text")]
    EmptyText(String),
    #[error("pool question is empty")]
    EmptyQuestion,
    #[error("pool has no statements")]
    NoStatements,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SeedError {
    #[error("imbalance {positive}+{negative} does not cover {nodes} nodes")]
    CountMismatch {
        positive: usize,
        negative: usize,
        nodes: usize,
    },
    #[error("no seed layout without adjacent duplicates found after {steps} steps")]
    Infeasible { steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedStance {
    Positive,
    Negative,
}

impl SeedStance {
    pub fn value(self) -> i8 {
        match self {
            SeedStance::Positive => 1,
            SeedStance::Negative => -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub id: String,
    pub text: String,
    pub stance: SeedStance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementPool {
    pub question: String,
    pub statements: Vec<Statement>,
}

impl StatementPool {
    pub fn from_json(s: &str) -> Result<Self, PoolError> {
        let pool: StatementPool = serde_json::from_str(s)?;
        pool.validate()?;
        Ok(pool)
    }

    pub fn default_pool() -> Self {
        Self::from_json(DEFAULT_POOL_JSON).expect("bundled pool is valid")
    }

    pub fn validate(&self) -> Result<(), PoolError> {
        if self.question.trim().is_empty() {
            return Err(PoolError::EmptyQuestion);
        }
        if self.statements.is_empty() {
            return Err(PoolError::NoStatements);
        }
        let mut seen = HashSet::new();
        for s in &self.statements {
            if !seen.insert(s.id.as_str()) {
                return Err(PoolError::DuplicateId(s.id.clone()));
            }
            if s.text.trim().is_empty() {
                return Err(PoolError::EmptyText(s.id.clone()));
            }
        }
        let positive = self.with_stance(SeedStance::Positive).count();
        let negative = self.statements.len() - positive;
        if positive != negative {
            return Err(PoolError::StanceImbalance { positive, negative });
        }
        Ok(())
    }

    pub fn with_stance(&self, stance: SeedStance) -> impl Iterator<Item = &Statement> + '_ {
        self.statements.iter().filter(move |s| s.stance == stance)
    }

    pub fn get(&self, id: &str) -> Option<&Statement> {
        self.statements.iter().find(|s| s.id == id)
    }
}

/// Reads and validates a pool document.
pub fn load_pool<R: Read>(mut source: R) -> Result<StatementPool, PoolError> {
    let mut buf = String::new();
    source.read_to_string(&mut buf)?;
    StatementPool::from_json(&buf)
}

/// Requested stance counts at iteration 0. The positive block fills the top
/// of the grid in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Imbalance {
    pub positive: usize,
    pub negative: usize,
}

impl Default for Imbalance {
    fn default() -> Self {
        Imbalance {
            positive: 14,
            negative: 11,
        }
    }
}

impl Imbalance {
    pub fn total(&self) -> usize {
        self.positive + self.negative
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub node: NodeId,
    pub statement_id: String,
    pub text: String,
    pub stance: SeedStance,
}

/// Iteration-0 assignment of pool statements to nodes, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedLayout {
    pub topology: GridTopology,
    pub entries: Vec<SeedEntry>,
    pub positive_count: usize,
    pub negative_count: usize,
}

impl SeedLayout {
    pub fn entry(&self, v: NodeId) -> &SeedEntry {
        &self.entries[self.topology.index(v)]
    }

    /// Pairs of lattice-adjacent nodes holding the same statement id.
    pub fn adjacent_duplicates(&self) -> Vec<(NodeId, NodeId)> {
        let topo = self.topology;
        let mut out = Vec::new();
        for v in topo.nodes() {
            for u in topo.lattice_neighbors(v).expect("own node") {
                if u > v && self.entry(u).statement_id == self.entry(v).statement_id {
                    out.push((v, u));
                }
            }
        }
        out
    }
}

/// Assigns pool statements to every node so that positive stances occupy the
/// first `imbalance.positive` nodes in row-major order, negatives the rest,
/// and no two lattice neighbors share a statement id. Deterministic in
/// `rng_seed`.
pub fn seed_layout(
    pool: &StatementPool,
    topo: GridTopology,
    imbalance: Imbalance,
    rng_seed: u64,
) -> Result<SeedLayout, SeedError> {
    let n = topo.node_count();
    if imbalance.total() != n {
        return Err(SeedError::CountMismatch {
            positive: imbalance.positive,
            negative: imbalance.negative,
            nodes: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let stance_of = |i: usize| {
        if i < imbalance.positive {
            SeedStance::Positive
        } else {
            SeedStance::Negative
        }
    };
    let by_stance = |stance: SeedStance| -> Vec<usize> {
        pool.statements
            .iter()
            .enumerate()
            .filter(|(_, s)| s.stance == stance)
            .map(|(i, _)| i)
            .collect()
    };
    let positives = by_stance(SeedStance::Positive);
    let negatives = by_stance(SeedStance::Negative);

    let mut assigned: Vec<Option<usize>> = vec![None; n];
    let mut uses = vec![0usize; pool.statements.len()];
    // Per-node candidate queues; `frames[i]` is rebuilt whenever node i is
    // entered going forward.
    let mut frames: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut steps = 0usize;
    let mut i = 0usize;
    let mut entering = true;

    while i < n {
        if entering {
            let v = topo.node(i);
            // Row-major fill: only the up and left neighbors are assigned yet.
            let blocked: Vec<usize> = topo
                .lattice_neighbors(v)
                .expect("own node")
                .into_iter()
                .filter_map(|u| assigned[topo.index(u)])
                .collect();
            let pool_ids = match stance_of(i) {
                SeedStance::Positive => &positives,
                SeedStance::Negative => &negatives,
            };
            let mut candidates: Vec<usize> = pool_ids
                .iter()
                .copied()
                .filter(|c| !blocked.contains(c))
                .collect();
            candidates.shuffle(&mut rng);
            // Least-used first; the queue is popped from the back.
            candidates.sort_by_key(|c| std::cmp::Reverse(uses[*c]));
            frames[i] = candidates;
        }
        if let Some(c) = frames[i].pop() {
            steps += 1;
            if steps > MAX_SEED_STEPS {
                return Err(SeedError::Infeasible { steps: MAX_SEED_STEPS });
            }
            if let Some(prev) = assigned[i].replace(c) {
                uses[prev] -= 1;
            }
            uses[c] += 1;
            i += 1;
            entering = true;
        } else {
            if let Some(prev) = assigned[i].take() {
                uses[prev] -= 1;
            }
            if i == 0 {
                return Err(SeedError::Infeasible { steps });
            }
            i -= 1;
            entering = false;
        }
    }

    let entries = assigned
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let s = &pool.statements[c.expect("all nodes assigned")];
            SeedEntry {
                node: topo.node(i),
                statement_id: s.id.clone(),
                text: s.text.clone(),
                stance: s.stance,
            }
        })
        .collect();
    Ok(SeedLayout {
        topology: topo,
        entries,
        positive_count: imbalance.positive,
        negative_count: imbalance.negative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_pool() -> StatementPool {
        StatementPool {
            question: "q?".into(),
            statements: vec![
                Statement {
                    id: "p".into(),
                    text: "red meat causes cancer".into(),
                    stance: SeedStance::Positive,
                },
                Statement {
                    id: "n".into(),
                    text: "red meat is safe".into(),
                    stance: SeedStance::Negative,
                },
            ],
        }
    }

    #[test]
    fn default_pool_is_balanced_24() {
        let pool = StatementPool::default_pool();
        assert_eq!(pool.statements.len(), 24);
        assert_eq!(pool.with_stance(SeedStance::Positive).count(), 12);
        assert_eq!(pool.with_stance(SeedStance::Negative).count(), 12);
    }

    #[test]
    fn rejects_imbalanced_pool() {
        let mut pool = StatementPool::default_pool();
        let neg = pool
            .statements
            .iter_mut()
            .find(|s| s.stance == SeedStance::Negative)
            .unwrap();
        neg.stance = SeedStance::Positive;
        let json = serde_json::to_string(&pool).unwrap();
        match StatementPool::from_json(&json) {
            Err(PoolError::StanceImbalance { positive, negative }) => {
                assert_eq!((positive, negative), (13, 11))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_and_duplicate() {
        assert!(matches!(load_pool(&b""[..]), Err(PoolError::Parse(_))));
        let mut pool = tiny_pool();
        pool.statements[1].id = "p".into();
        let json = serde_json::to_string(&pool).unwrap();
        assert!(matches!(
            StatementPool::from_json(&json),
            Err(PoolError::DuplicateId(id)) if id == "p"
        ));
        assert!(matches!(
            StatementPool::from_json(r#"{"question":"q","statements":[{"id":"a","text":"x","stance":"maybe"}]}"#),
            Err(PoolError::Parse(_))
        ));
    }

    #[test]
    fn default_layout_regions_and_distinctness() {
        let pool = StatementPool::default_pool();
        let topo = GridTopology::default();
        let layout = seed_layout(&pool, topo, Imbalance::default(), 1).unwrap();
        for (i, e) in layout.entries.iter().enumerate() {
            let want = if i < 14 {
                SeedStance::Positive
            } else {
                SeedStance::Negative
            };
            assert_eq!(e.stance, want, "node {i}");
            assert_eq!(pool.get(&e.statement_id).unwrap().stance, want);
        }
        // exhaustive scan of every ordered neighbor pair
        for v in topo.nodes() {
            for u in topo.nodes() {
                let adjacent = v.row.abs_diff(u.row) + v.col.abs_diff(u.col) == 1;
                if adjacent {
                    assert_ne!(layout.entry(v).statement_id, layout.entry(u).statement_id);
                }
            }
        }
    }

    #[test]
    fn single_node_grid() {
        let pool = tiny_pool();
        let topo = GridTopology::new(1, 1).unwrap();
        let layout = seed_layout(
            &pool,
            topo,
            Imbalance {
                positive: 1,
                negative: 0,
            },
            3,
        )
        .unwrap();
        assert_eq!(layout.entries.len(), 1);
        assert_eq!(layout.entries[0].statement_id, "p");
    }

    #[test]
    fn two_statement_pool_is_infeasible() {
        // (0,0) and (0,1) are both positive and only one positive statement exists.
        let err = seed_layout(&tiny_pool(), GridTopology::default(), Imbalance::default(), 1)
            .unwrap_err();
        assert!(matches!(err, SeedError::Infeasible { .. }));
    }

    #[test]
    fn count_mismatch() {
        let err = seed_layout(
            &StatementPool::default_pool(),
            GridTopology::default(),
            Imbalance {
                positive: 14,
                negative: 10,
            },
            1,
        )
        .unwrap_err();
        assert!(matches!(err, SeedError::CountMismatch { nodes: 25, .. }));
    }

    #[test]
    fn reproducible_per_seed() {
        let pool = StatementPool::default_pool();
        let topo = GridTopology::default();
        let a = seed_layout(&pool, topo, Imbalance::default(), 42).unwrap();
        let b = seed_layout(&pool, topo, Imbalance::default(), 42).unwrap();
        let c = seed_layout(&pool, topo, Imbalance::default(), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn distinct_over_many_seeds() {
        let pool = StatementPool::default_pool();
        let topo = GridTopology::default();
        for seed in 0..1000 {
            let layout = seed_layout(&pool, topo, Imbalance::default(), seed).unwrap();
            assert!(layout.adjacent_duplicates().is_empty(), "seed {seed}");
            let pos = layout
                .entries
                .iter()
                .filter(|e| e.stance == SeedStance::Positive)
                .count();
            assert_eq!(pos, 14);
        }
    }
}
