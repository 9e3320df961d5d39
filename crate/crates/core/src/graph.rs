//! Communication topology and the population-weighted Laplacian.
//!
//! The Laplacian couples agents through edge weights `p_i * p_j`:
//!
//! ```text
//! l_ij = -p_i p_j        for {i, j} in E
//! l_ij = 0               otherwise
//! l_ii = -sum_{j in N_i} l_ij
//! ```
//!
//! Components are topological (union-find over the edge list), so an agent
//! holding zero population still belongs to the component of its neighbours.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Undirected graph on agents `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from unordered pairs. Each pair is stored as `(min, max)`.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Argument("graph needs at least one agent".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        let mut stored = Vec::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::Argument(format!(
                    "edge ({i}, {j}) has an endpoint outside 0..{n}"
                )));
            }
            if i == j {
                return Err(Error::Argument(format!("self-loop at agent {i}")));
            }
            let edge = (i.min(j), i.max(j));
            if adjacency[edge.0].contains(&edge.1) {
                return Err(Error::Argument(format!(
                    "duplicate edge ({}, {})",
                    edge.0, edge.1
                )));
            }
            adjacency[edge.0].push(edge.1);
            adjacency[edge.1].push(edge.0);
            stored.push(edge);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Graph {
            n,
            edges: stored,
            adjacency,
        })
    }

    pub fn empty(n: usize) -> Result<Self> {
        Graph::new(n, std::iter::empty())
    }

    pub fn complete(n: usize) -> Result<Self> {
        Graph::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    /// Path `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Result<Self> {
        Graph::new(n, (1..n).map(|i| (i - 1, i)))
    }

    /// Cycle `0 - 1 - ... - (n-1) - 0`; for `n < 3` this is a path.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Graph::path(n);
        }
        Graph::new(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edges(&self) -> bool {
        !self.edges.is_empty()
    }

    /// Sorted neighbour ids of agent `i`.
    pub fn neighbors(&self, i: usize) -> Result<&[usize]> {
        self.adjacency
            .get(i)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Argument(format!("agent {i} outside 0..{}", self.n)))
    }

    /// `|N_i|`. Panics if `i >= n`.
    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn laplacian(&self, p: &[f64]) -> Result<WeightedLaplacian> {
        self.check_population(p)?;
        let mut m = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            let w = p[i] * p[j];
            m[(i, j)] = -w;
            m[(j, i)] = -w;
            m[(i, i)] += w;
            m[(j, j)] += w;
        }
        Ok(WeightedLaplacian { matrix: m })
    }

    /// Matrix-free `L(w) x`, i.e. `sum_{j in N_i} w_i w_j (x_i - x_j)`.
    ///
    /// Lengths are not checked; callers validate once up front.
    pub fn apply_laplacian(&self, w: &[f64], x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for &(i, j) in &self.edges {
            let flow = w[i] * w[j] * (x[i] - x[j]);
            out[i] += flow;
            out[j] -= flow;
        }
        out
    }

    /// Disjoint components covering every agent. Members are sorted and the
    /// components are ordered by their smallest member.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let mut sets = DisjointSets::new(self.n);
        for &(i, j) in &self.edges {
            sets.union(i, j);
        }
        let mut by_root: Vec<Option<usize>> = vec![None; self.n];
        let mut components: Vec<Vec<usize>> = Vec::new();
        for agent in 0..self.n {
            let root = sets.find(agent);
            match by_root[root] {
                Some(k) => components[k].push(agent),
                None => {
                    by_root[root] = Some(components.len());
                    components.push(vec![agent]);
                }
            }
        }
        components
    }

    pub fn is_connected(&self) -> bool {
        self.connected_components().len() == 1
    }

    /// Gershgorin bound on `sup_{p in simplex} ||L(p)||_2`.
    ///
    /// On the simplex `p_i p_j <= total^2 / 4`, and each Gershgorin disc of
    /// `L(p)` reaches at most `2 * |N_i| * max weight`.
    pub fn spectral_norm_bound(&self, total: f64) -> Result<NormBound> {
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Domain(format!(
                "total population must be positive, got {total}"
            )));
        }
        let max_deg = self.max_degree();
        Ok(NormBound {
            eta: 2.0 * max_deg as f64 * total * total / 4.0,
            degenerate: max_deg == 0,
        })
    }

    /// For each agent, the Fiedler value of its own component's Laplacian
    /// evaluated at `p`; `None` for isolated agents.
    pub fn component_fiedler_values(&self, p: &[f64]) -> Result<Vec<Option<f64>>> {
        let full = self.laplacian(p)?;
        let mut out = vec![None; self.n];
        for component in self.connected_components() {
            if component.len() < 2 {
                continue;
            }
            let sub = full.submatrix(&component);
            let lambda2 = sub.fiedler_value()?;
            for &agent in &component {
                out[agent] = Some(lambda2);
            }
        }
        Ok(out)
    }

    fn check_population(&self, p: &[f64]) -> Result<()> {
        check_len("population vector", p.len(), self.n)?;
        if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::Domain(format!(
                "population of agent {i} must be non-negative, got {v}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBound {
    pub eta: f64,
    /// Set when the graph has no edges and `L(p)` is identically zero.
    pub degenerate: bool,
}

/// Symmetric matrix `L(p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedLaplacian {
    matrix: DMatrix<f64>,
}

impl WeightedLaplacian {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Argument("Laplacian must be square".into()));
        }
        Ok(WeightedLaplacian { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix.row_iter().map(|r| r.sum()).collect()
    }

    /// All eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut values: Vec<f64> = SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        values.sort_by(f64::total_cmp);
        values
    }

    /// Second-smallest eigenvalue (algebraic connectivity).
    pub fn fiedler_value(&self) -> Result<f64> {
        if self.n() < 2 {
            return Err(Error::Domain(
                "Fiedler value needs at least two agents".into(),
            ));
        }
        Ok(self.eigenvalues()[1])
    }

    /// `||L||_2`, the largest eigenvalue magnitude.
    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues()
            .into_iter()
            .map(f64::abs)
            .fold(0.0, f64::max)
    }

    fn submatrix(&self, ids: &[usize]) -> WeightedLaplacian {
        let k = ids.len();
        WeightedLaplacian {
            matrix: DMatrix::from_fn(k, k, |r, c| self.matrix[(ids[r], ids[c])]),
        }
    }
}

/// Union-find with path halving and union by size.
struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}
