//! Directed grid-lattice network: node identity, spatial neighbors and the
//! previous-iteration observation sets agents are shown.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("grid dimensions must be positive, got {rows}x{cols}")]
    EmptyGrid { rows: usize, cols: usize },
    #[error("node ({row}, {col}) is outside a {rows}x{cols} grid")]
    InvalidNode {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
}

/// A lattice position. Ordering is row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub row: usize,
    pub col: usize,
}

impl NodeId {
    pub const fn new(row: usize, col: usize) -> Self {
        NodeId { row, col }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// A reference to a node's statement at an earlier iteration, relative to the
/// iteration being filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObservationRef {
    pub node: NodeId,
    pub iteration_offset: i32,
}

/// Open (non-toroidal) rows x cols lattice with von Neumann neighborhoods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridTopology {
    rows: usize,
    cols: usize,
}

impl Default for GridTopology {
    fn default() -> Self {
        GridTopology { rows: 5, cols: 5 }
    }
}

impl GridTopology {
    pub fn new(rows: usize, cols: usize) -> Result<Self, TopologyError> {
        if rows == 0 || cols == 0 {
            return Err(TopologyError::EmptyGrid { rows, cols });
        }
        Ok(GridTopology { rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of nodes, `rows * cols`.
    pub fn node_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.row < self.rows && v.col < self.cols
    }

    pub fn check(&self, v: NodeId) -> Result<(), TopologyError> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(TopologyError::InvalidNode {
                row: v.row,
                col: v.col,
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    /// Row-major index of `v`. Callers must pass a valid node.
    pub fn index(&self, v: NodeId) -> usize {
        debug_assert!(self.contains(v));
        v.row * self.cols + v.col
    }

    pub fn node(&self, index: usize) -> NodeId {
        debug_assert!(index < self.node_count());
        NodeId::new(index / self.cols, index % self.cols)
    }

    /// All nodes in row-major order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.node_count()).map(move |i| self.node(i))
    }

    /// Same-iteration spatial neighbors in up, down, left, right order.
    pub fn lattice_neighbors(&self, v: NodeId) -> Result<Vec<NodeId>, TopologyError> {
        self.check(v)?;
        let mut out = Vec::with_capacity(4);
        if v.row > 0 {
            out.push(NodeId::new(v.row - 1, v.col));
        }
        if v.row + 1 < self.rows {
            out.push(NodeId::new(v.row + 1, v.col));
        }
        if v.col > 0 {
            out.push(NodeId::new(v.row, v.col - 1));
        }
        if v.col + 1 < self.cols {
            out.push(NodeId::new(v.row, v.col + 1));
        }
        Ok(out)
    }

    /// Statements shown when filling `v`: the node's own previous statement
    /// first, then its lattice neighbors, all at the previous iteration.
    pub fn observation_set(&self, v: NodeId) -> Result<Vec<ObservationRef>, TopologyError> {
        let neighbors = self.lattice_neighbors(v)?;
        Ok(std::iter::once(v)
            .chain(neighbors)
            .map(|node| ObservationRef {
                node,
                iteration_offset: -1,
            })
            .collect())
    }

    /// Neighbor lists by row-major index, for numerical models.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        self.nodes()
            .map(|v| {
                self.lattice_neighbors(v)
                    .expect("node from own iterator")
                    .into_iter()
                    .map(|u| self.index(u))
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn set(v: Vec<NodeId>) -> BTreeSet<NodeId> {
        v.into_iter().collect()
    }

    #[test]
    fn corner_edge_interior_neighbors() {
        let g = GridTopology::default();
        assert_eq!(
            set(g.lattice_neighbors(NodeId::new(0, 0)).unwrap()),
            set(vec![NodeId::new(0, 1), NodeId::new(1, 0)])
        );
        assert_eq!(
            set(g.lattice_neighbors(NodeId::new(2, 2)).unwrap()),
            set(vec![
                NodeId::new(1, 2),
                NodeId::new(3, 2),
                NodeId::new(2, 1),
                NodeId::new(2, 3)
            ])
        );
        assert_eq!(
            set(g.lattice_neighbors(NodeId::new(0, 2)).unwrap()),
            set(vec![NodeId::new(0, 1), NodeId::new(0, 3), NodeId::new(1, 2)])
        );
    }

    #[test]
    fn observation_set_sizes() {
        let g = GridTopology::default();
        assert_eq!(g.observation_set(NodeId::new(0, 0)).unwrap().len(), 3);
        assert_eq!(g.observation_set(NodeId::new(2, 2)).unwrap().len(), 5);
        assert_eq!(g.observation_set(NodeId::new(4, 1)).unwrap().len(), 4);
        let obs = g.observation_set(NodeId::new(3, 3)).unwrap();
        assert_eq!(obs[0].node, NodeId::new(3, 3));
        assert!(obs.iter().all(|o| o.iteration_offset == -1));
    }

    #[test]
    fn observation_histogram_and_link_count() {
        let g = GridTopology::default();
        let mut hist = [0usize; 6];
        let mut links = 0;
        for v in g.nodes() {
            hist[g.observation_set(v).unwrap().len()] += 1;
            links += g.lattice_neighbors(v).unwrap().len();
        }
        assert_eq!(&hist[3..], &[4, 12, 9]);
        assert_eq!(links, 80);
        assert_eq!(hist.iter().sum::<usize>(), 25);
    }

    #[test]
    fn neighbors_are_symmetric_and_at_distance_one() {
        let g = GridTopology::new(4, 7).unwrap();
        for v in g.nodes() {
            for u in g.lattice_neighbors(v).unwrap() {
                let d = v.row.abs_diff(u.row) + v.col.abs_diff(u.col);
                assert_eq!(d, 1);
                assert!(g.lattice_neighbors(u).unwrap().contains(&v));
            }
        }
    }

    #[test]
    fn invalid_nodes_and_dims() {
        let g = GridTopology::default();
        assert!(matches!(
            g.lattice_neighbors(NodeId::new(5, 0)),
            Err(TopologyError::InvalidNode { .. })
        ));
        assert!(g.observation_set(NodeId::new(0, 9)).is_err());
        assert!(GridTopology::new(0, 3).is_err());
    }

    #[test]
    fn single_node_grid_has_only_self_observation() {
        let g = GridTopology::new(1, 1).unwrap();
        assert!(g.lattice_neighbors(NodeId::new(0, 0)).unwrap().is_empty());
        assert_eq!(g.observation_set(NodeId::new(0, 0)).unwrap().len(), 1);
    }
}
