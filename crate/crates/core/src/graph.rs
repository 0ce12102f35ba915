//! Weighted undirected communication graphs and their Laplacian spectra.
//!
//! The spectrum carries the orthogonal basis `U = [𝟙/√N, X₁]` that
//! diagonalises the Laplacian; it is the change of coordinates that splits
//! the networked closed loop into one consensus block and `N − 1` blocks
//! parameterised by the nonzero eigenvalues.

use std::collections::{HashSet, VecDeque};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen_sorted, Mat, Vector};

/// Eigenvalues at or below this are treated as zero when testing connectivity.
pub const CONNECTIVITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    /// 0-based endpoints.
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// A connected, weighted, undirected graph without self-loops or parallel edges.
#[derive(Debug, Clone)]
pub struct NetworkGraph {
    num_agents: usize,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

fn validate_edges(num_agents: usize, edges: &[Edge]) -> Result<()> {
    if num_agents < 2 {
        return Err(Error::InvalidGraph(format!(
            "need at least 2 agents, got {num_agents}"
        )));
    }
    let mut seen = HashSet::new();
    for e in edges {
        if e.a >= num_agents || e.b >= num_agents {
            return Err(Error::InvalidGraph(format!(
                "edge ({}, {}) references an agent outside 1..={num_agents}",
                e.a + 1,
                e.b + 1
            )));
        }
        if e.a == e.b {
            return Err(Error::InvalidGraph(format!(
                "self-loop at agent {}",
                e.a + 1
            )));
        }
        if !(e.weight.is_finite() && e.weight > 0.0) {
            return Err(Error::InvalidWeight {
                i: e.a + 1,
                j: e.b + 1,
                weight: e.weight,
            });
        }
        if !seen.insert((e.a.min(e.b), e.a.max(e.b))) {
            return Err(Error::InvalidGraph(format!(
                "duplicate edge ({}, {})",
                e.a + 1,
                e.b + 1
            )));
        }
    }
    Ok(())
}

/// True iff every vertex is reachable from vertex 0 by undirected traversal.
pub fn connectivity_check(num_agents: usize, edges: &[Edge]) -> bool {
    if num_agents == 0 {
        return false;
    }
    let mut adjacency = vec![Vec::new(); num_agents];
    for e in edges {
        if e.a < num_agents && e.b < num_agents {
            adjacency[e.a].push(e.b);
            adjacency[e.b].push(e.a);
        }
    }
    let mut visited = vec![false; num_agents];
    let mut queue = VecDeque::from([0]);
    visited[0] = true;
    while let Some(v) = queue.pop_front() {
        for &w in &adjacency[v] {
            if !visited[w] {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    visited.into_iter().all(|v| v)
}

impl NetworkGraph {
    /// Builds a graph from 0-based edges. Fails on invalid weights, self-loops,
    /// duplicates, or a disconnected topology.
    pub fn new(num_agents: usize, edges: Vec<Edge>) -> Result<Self> {
        validate_edges(num_agents, &edges)?;
        if !connectivity_check(num_agents, &edges) {
            return Err(Error::DisconnectedGraph { lambda2: 0.0 });
        }
        let mut neighbors = vec![Vec::new(); num_agents];
        for e in &edges {
            neighbors[e.a].push((e.b, e.weight));
            neighbors[e.b].push((e.a, e.weight));
        }
        for list in &mut neighbors {
            list.sort_by_key(|&(j, _)| j);
        }
        Ok(Self {
            num_agents,
            edges,
            neighbors,
        })
    }

    /// Builds a graph from 1-based `(i, j, weight)` triples as used in configs.
    pub fn from_one_based(num_agents: usize, triples: &[(usize, usize, f64)]) -> Result<Self> {
        let edges = triples
            .iter()
            .map(|&(i, j, weight)| {
                if i == 0 || j == 0 {
                    Err(Error::InvalidGraph("vertex indices are 1-based".into()))
                } else {
                    Ok(Edge {
                        a: i - 1,
                        b: j - 1,
                        weight,
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(num_agents, edges)
    }

    /// Path `1 – 2 – … – N` with unit weights.
    pub fn path(num_agents: usize) -> Result<Self> {
        let edges = (1..num_agents)
            .map(|k| Edge {
                a: k - 1,
                b: k,
                weight: 1.0,
            })
            .collect();
        Self::new(num_agents, edges)
    }

    /// Complete graph with unit weights.
    pub fn complete(num_agents: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for a in 0..num_agents {
            for b in a + 1..num_agents {
                edges.push(Edge { a, b, weight: 1.0 });
            }
        }
        Self::new(num_agents, edges)
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of agent `i` with edge weights `a_ij`.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn is_connected(&self) -> bool {
        connectivity_check(self.num_agents, &self.edges)
    }

    /// Weighted Laplacian `D − A`.
    pub fn laplacian(&self) -> Mat {
        let n = self.num_agents;
        let mut l = Mat::zeros(n, n);
        for e in &self.edges {
            l[(e.a, e.b)] -= e.weight;
            l[(e.b, e.a)] -= e.weight;
            l[(e.a, e.a)] += e.weight;
            l[(e.b, e.b)] += e.weight;
        }
        l
    }

    pub fn spectrum(&self) -> Result<LaplacianSpectrum> {
        build_laplacian(self)
    }
}

/// Laplacian, its ascending eigenvalues, and an orthogonal diagonalising basis
/// whose first column is exactly `𝟙/√N`.
#[derive(Debug, Clone)]
pub struct LaplacianSpectrum {
    pub laplacian: Mat,
    pub eigenvalues: Vec<f64>,
    pub basis: Mat,
}

impl LaplacianSpectrum {
    pub fn num_agents(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Algebraic connectivity λ₂.
    pub fn lambda2(&self) -> f64 {
        self.eigenvalues[1]
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().expect("at least two agents")
    }

    /// The nonzero eigenvalues λ₂ … λ_N.
    pub fn nonzero_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues[1..]
    }
}

pub fn build_laplacian(g: &NetworkGraph) -> Result<LaplacianSpectrum> {
    validate_edges(g.num_agents, &g.edges)?;
    let laplacian = g.laplacian();
    let (mut eigenvalues, vectors) = sym_eigen_sorted(&laplacian);
    let n = g.num_agents;
    if eigenvalues[1] <= CONNECTIVITY_TOL || !g.is_connected() {
        return Err(Error::DisconnectedGraph {
            lambda2: eigenvalues[1],
        });
    }
    // λ₁ is exactly zero for a connected graph; the solver returns rounding noise.
    eigenvalues[0] = 0.0;

    // Pin the consensus direction and re-orthonormalise the rest against it.
    let mut basis = Mat::zeros(n, n);
    let ones = Vector::from_element(n, 1.0 / (n as f64).sqrt());
    basis.set_column(0, &ones);
    for k in 1..n {
        let mut col: Vector = vectors.column(k).into_owned();
        for prev in 0..k {
            let p = basis.column(prev).into_owned();
            col -= &p * p.dot(&col);
        }
        let norm = col.norm();
        if norm < 1e-8 {
            return Err(Error::NumericalFailure(
                "Laplacian eigenbasis lost orthogonality".into(),
            ));
        }
        basis.set_column(k, &(col / norm));
    }
    Ok(LaplacianSpectrum {
        laplacian,
        eigenvalues,
        basis,
    })
}
