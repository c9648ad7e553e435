//! Areal adjacency graphs and the conditional autoregressive (CAR) algebra
//! built on them.
//!
//! A [`LatticeGraph`] is an undirected, connected graph with binary
//! adjacency `A` and degree matrix `D`. Rook lattices are the common case,
//! but any connected edge list is accepted so that masked grids (cells
//! removed over land, for instance) can be modelled directly.

pub(crate) mod car;
mod envelope;

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub use car::{
    car_log_det, car_precision, induced_covariance, path_series_covariance, sample_car,
    CarField, CarSampler, SparsePrecision,
};
pub use envelope::EnvelopeCholesky;

#[derive(Debug, Clone)]
pub struct LatticeGraph {
    shape: Option<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    spectrum: OnceLock<Vec<f64>>,
}

/// Rook (4-neighbour) lattice over a `rows x cols` grid, row-major indexing.
pub fn build_lattice(rows: usize, cols: usize) -> Result<LatticeGraph> {
    LatticeGraph::lattice(rows, cols)
}

impl LatticeGraph {
    pub fn lattice(rows: usize, cols: usize) -> Result<Self> {
        let nodes = rows * cols;
        if rows == 0 || cols == 0 || nodes < 2 {
            return Err(Error::DegenerateGraph(nodes));
        }
        let mut neighbors = vec![Vec::with_capacity(4); nodes];
        for r in 0..rows {
            for c in 0..cols {
                let j = r * cols + c;
                if r > 0 {
                    neighbors[j].push(j - cols);
                }
                if c > 0 {
                    neighbors[j].push(j - 1);
                }
                if c + 1 < cols {
                    neighbors[j].push(j + 1);
                }
                if r + 1 < rows {
                    neighbors[j].push(j + cols);
                }
            }
        }
        Ok(Self {
            shape: Some((rows, cols)),
            neighbors,
            spectrum: OnceLock::new(),
        })
    }

    /// Builds a graph from an undirected edge list. Duplicate edges are
    /// merged; self loops and disconnected graphs are rejected.
    pub fn from_edges(nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if nodes < 2 {
            return Err(Error::DegenerateGraph(nodes));
        }
        let mut sets = vec![BTreeSet::new(); nodes];
        for &(a, b) in edges {
            if a >= nodes || b >= nodes || a == b {
                return Err(Error::InvalidEdge { a, b, nodes });
            }
            sets[a].insert(b);
            sets[b].insert(a);
        }
        let graph = Self {
            shape: None,
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
            spectrum: OnceLock::new(),
        };
        let components = graph.component_count();
        if components > 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(graph)
    }

    /// Reads an edge-list CSV with header `node_a,node_b` (0-based).
    pub fn from_edge_csv(path: impl AsRef<Path>, nodes: usize) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "node_a" || &headers[1] != "node_b" {
            return Err(Error::data(path, "expected header `node_a,node_b`"));
        }
        let mut edges = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let parse = |s: &str| {
                s.trim().parse::<usize>().map_err(|_| {
                    Error::data(path, format!("row {}: invalid node index {s:?}", line + 1))
                })
            };
            edges.push((parse(&record[0])?, parse(&record[1])?));
        }
        Self::from_edges(nodes, &edges)
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// `(rows, cols)` for lattice-built graphs.
    pub fn shape(&self) -> Option<(usize, usize)> {
        self.shape
    }

    pub fn coords(&self, j: usize) -> Option<(usize, usize)> {
        self.shape.map(|(_, cols)| (j / cols, j % cols))
    }

    pub fn neighbors(&self, j: usize) -> &[usize] {
        &self.neighbors[j]
    }

    pub fn degree(&self, j: usize) -> usize {
        self.neighbors[j].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn adjacency_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut a = DMatrix::zeros(n, n);
        for (j, nb) in self.neighbors.iter().enumerate() {
            for &k in nb {
                a[(j, k)] = 1.0;
            }
        }
        a
    }

    /// `x' D x`.
    pub fn degree_quad(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.neighbors)
            .map(|(v, nb)| nb.len() as f64 * v * v)
            .sum()
    }

    /// `x' A x`, each undirected edge counted twice.
    pub fn adjacency_quad(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.neighbors)
            .map(|(v, nb)| v * nb.iter().map(|&k| x[k]).sum::<f64>())
            .sum()
    }

    /// Eigenvalues of `D^{-1/2} A D^{-1/2}`, ascending. Computed once.
    pub fn normalized_spectrum(&self) -> &[f64] {
        self.spectrum.get_or_init(|| {
            let n = self.len();
            let inv_sqrt: Vec<f64> = self
                .neighbors
                .iter()
                .map(|nb| 1.0 / (nb.len() as f64).sqrt())
                .collect();
            let mut m = DMatrix::zeros(n, n);
            for (j, nb) in self.neighbors.iter().enumerate() {
                for &k in nb {
                    m[(j, k)] = inv_sqrt[j] * inv_sqrt[k];
                }
            }
            let mut values: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
            values.sort_by(f64::total_cmp);
            values
        })
    }

    /// Breadth-first graph distances from `source`; unreachable nodes get `usize::MAX`.
    pub fn distances_from(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.len()];
        let mut queue = VecDeque::from([source]);
        dist[source] = 0;
        while let Some(j) = queue.pop_front() {
            for &k in &self.neighbors[j] {
                if dist[k] == usize::MAX {
                    dist[k] = dist[j] + 1;
                    queue.push_back(k);
                }
            }
        }
        dist
    }

    fn component_count(&self) -> usize {
        let mut seen = vec![false; self.len()];
        let mut count = 0;
        for start in 0..self.len() {
            if seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(j) = stack.pop() {
                for &k in &self.neighbors[j] {
                    if !seen[k] {
                        seen[k] = true;
                        stack.push(k);
                    }
                }
            }
        }
        count
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_degrees() {
        let g = build_lattice(2, 2).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.degrees(), vec![2, 2, 2, 2]);
    }

    #[test]
    fn one_by_two_adjacency() {
        let g = build_lattice(1, 2).unwrap();
        assert_eq!(g.adjacency_dense(), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert_eq!(g.degrees(), vec![1, 1]);
    }

    #[test]
    fn three_by_three_degree_multiset() {
        let g = build_lattice(3, 3).unwrap();
        let mut d = g.degrees();
        d.sort();
        assert_eq!(d, vec![2, 2, 2, 2, 3, 3, 3, 3, 4]);
    }

    #[test]
    fn single_cell_rejected() {
        assert!(matches!(build_lattice(1, 1), Err(Error::DegenerateGraph(1))));
        assert!(build_lattice(0, 5).is_err());
    }

    #[test]
    fn disconnected_edge_list_rejected() {
        let err = LatticeGraph::from_edges(4, &[(0, 1), (2, 3)]).unwrap_err();
        assert!(matches!(err, Error::Disconnected { components: 2 }));
    }

    #[test]
    fn edge_list_validation() {
        assert!(LatticeGraph::from_edges(3, &[(0, 0), (1, 2)]).is_err());
        assert!(LatticeGraph::from_edges(3, &[(0, 3)]).is_err());
        let g = LatticeGraph::from_edges(3, &[(0, 1), (1, 0), (1, 2)]).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.degrees(), vec![1, 2, 1]);
    }

    #[test]
    fn adjacency_symmetric_zero_diagonal() {
        let g = build_lattice(4, 5).unwrap();
        let a = g.adjacency_dense();
        assert_eq!(a, a.transpose());
        assert!((0..g.len()).all(|j| a[(j, j)] == 0.0));
        for j in 0..g.len() {
            assert_eq!(a.row(j).sum() as usize, g.degree(j));
        }
    }

    #[test]
    fn spectrum_bounds() {
        let g = build_lattice(5, 4).unwrap();
        let s = g.normalized_spectrum();
        assert!(s.iter().all(|&mu| (-1.0 - 1e-10..=1.0 + 1e-10).contains(&mu)));
        assert!((s.last().unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn lattice_distances_are_manhattan() {
        let g = build_lattice(4, 6).unwrap();
        let d = g.distances_from(0);
        for j in 0..g.len() {
            let (r, c) = g.coords(j).unwrap();
            assert_eq!(d[j], r + c);
        }
    }

    #[test]
    fn edge_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("edges.csv");
        std::fs::write(&path, "node_a,node_b\n0,1\n1,2\n2,3\n").unwrap();
        let g = LatticeGraph::from_edge_csv(&path, 4).unwrap();
        assert_eq!(g.degrees(), vec![1, 2, 2, 1]);
        std::fs::write(&path, "a,b\n0,1\n").unwrap();
        assert!(LatticeGraph::from_edge_csv(&path, 2).is_err());
    }
}
