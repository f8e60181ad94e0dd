//! Communication graphs, Metropolis-Hastings mixing and neighbor gossip.

use std::collections::VecDeque;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::linalg::{Matrix, Vector};
use crate::seed::rng_from_seed;
use crate::{Error, Result};

/// Default number of Erdős-Rényi draws before giving up on connectivity.
pub const DEFAULT_RESAMPLE_CAP: usize = 10_000;

/// Undirected simple graph on `n` agents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    /// Unordered pairs stored as `(i, j)` with `i < j`, lexicographically sorted.
    edges: Vec<(usize, usize)>,
    #[serde(skip)]
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an edge list. Self-loops are rejected and
    /// duplicate or reversed pairs are merged.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut list = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop at node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidParameter(format!("edge ({a}, {b}) out of range for n = {n}")));
            }
            list.push((a.min(b), a.max(b)));
        }
        list.sort_unstable();
        list.dedup();
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &list {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        Ok(Self { n, edges: list, neighbors })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    /// Path graph `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Self {
        Self::from_edges(n, (1..n).map(|i| (i - 1, i))).expect("path edges are valid")
    }

    /// Complete graph on `n` nodes.
    pub fn complete(n: usize) -> Self {
        Self::from_edges(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
            .expect("complete edges are valid")
    }

    /// Rebuilds the adjacency lists after deserialization.
    pub fn rebuild(self) -> Result<Self> {
        Self::from_edges(self.n, self.edges)
    }
}

/// Samples a connected Erdős-Rényi graph `G(n, p_er)`.
///
/// Disconnected draws are rejected and the same random stream keeps going, so
/// the result is a deterministic function of `seed`.
pub fn generate_er_graph(n: usize, p_er: f64, seed: u64) -> Result<Graph> {
    generate_er_graph_capped(n, p_er, seed, DEFAULT_RESAMPLE_CAP)
}

pub fn generate_er_graph_capped(n: usize, p_er: f64, seed: u64, cap: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("ER graph needs n >= 2, got {n}")));
    }
    if !(p_er > 0.0 && p_er <= 1.0) {
        return Err(Error::InvalidParameter(format!("edge probability must be in (0, 1], got {p_er}")));
    }
    let mut rng = rng_from_seed(seed);
    for _ in 0..cap {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p_er {
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::from_edges(n, edges)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::GraphExhausted { attempts: cap })
}

/// Symmetric doubly stochastic gossip matrix together with its mixing rate.
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    w: Matrix,
    rho: f64,
    /// Closed neighborhoods `N_i ∪ {i}` with the matching weights.
    stencil: Vec<Vec<(usize, f64)>>,
}

impl MixingMatrix {
    /// Wraps a dense weight matrix after checking symmetry, stochasticity,
    /// non-negativity and a positive diagonal.
    pub fn from_dense(w: Matrix) -> Result<Self> {
        let n = w.nrows();
        if n == 0 || w.ncols() != n {
            return Err(Error::DimensionMismatch(format!("mixing matrix must be square, got {:?}", w.shape())));
        }
        for i in 0..n {
            if w[(i, i)] <= 0.0 {
                return Err(Error::InvalidParameter(format!("diagonal entry W[{i}][{i}] is not positive")));
            }
            let row: f64 = w.row(i).sum();
            let col: f64 = w.column(i).sum();
            if (row - 1.0).abs() > 1e-12 || (col - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!("row/column {i} does not sum to 1")));
            }
            for j in 0..n {
                if w[(i, j)] < 0.0 {
                    return Err(Error::InvalidParameter(format!("negative entry W[{i}][{j}]")));
                }
                if (w[(i, j)] - w[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!("W is not symmetric at ({i}, {j})")));
                }
            }
        }
        let rho = mixing_rate(&w)?;
        let stencil = (0..n)
            .map(|i| (0..n).filter(|&j| w[(i, j)] != 0.0).map(|j| (j, w[(i, j)])).collect())
            .collect();
        Ok(Self { w, rho, stencil })
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.w
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Number of off-diagonal nonzero weights in row `i`, i.e. the number of
    /// neighbors agent `i` sends to in each gossip round.
    pub fn degree(&self, i: usize) -> usize {
        self.stencil[i].iter().filter(|(j, _)| *j != i).count()
    }

    /// Total number of directed neighbor messages per gossip round.
    pub fn directed_messages(&self) -> usize {
        (0..self.n()).map(|i| self.degree(i)).sum()
    }
}

/// Metropolis-Hastings weights: `W_ij = 1 / (1 + max(deg_i, deg_j))` on
/// edges, with the remaining mass on the diagonal.
pub fn metropolis_weights(g: &Graph) -> Result<MixingMatrix> {
    let n = g.n();
    let deg = g.degrees();
    let mut w = Matrix::zeros(n, n);
    for &(i, j) in g.edges() {
        let v = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    for i in 0..n {
        let off: f64 = g.neighbors(i).iter().map(|&j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    MixingMatrix::from_dense(w)
}

/// `ρ = ‖W − 𝟙𝟙ᵀ/N‖₂`, computed from a full symmetric eigendecomposition.
pub fn mixing_rate(w: &Matrix) -> Result<f64> {
    let n = w.nrows();
    let j = Matrix::from_element(n, n, 1.0 / n as f64);
    let dev = crate::linalg::symmetrize(&(w - j));
    let rho = crate::linalg::sym_spectral_norm(&dev)?;
    if rho >= 1.0 - 1e-12 {
        return Err(Error::RhoNotContractive(rho));
    }
    Ok(rho)
}

/// A block that can travel through gossip: vectors, or symmetric matrices
/// treated as their vectorization.
pub trait Payload: Clone {
    fn values(&self) -> &[f64];
    fn zeroed(&self) -> Self;
    fn add_scaled(&mut self, a: f64, other: &Self);
    fn shape(&self) -> (usize, usize);
}

impl Payload for Vector {
    fn values(&self) -> &[f64] {
        self.as_slice()
    }
    fn zeroed(&self) -> Self {
        Vector::zeros(self.len())
    }
    fn add_scaled(&mut self, a: f64, other: &Self) {
        self.axpy(a, other, 1.0);
    }
    fn shape(&self) -> (usize, usize) {
        (self.len(), 1)
    }
}

impl Payload for Matrix {
    fn values(&self) -> &[f64] {
        self.as_slice()
    }
    fn zeroed(&self) -> Self {
        Matrix::zeros(self.nrows(), self.ncols())
    }
    fn add_scaled(&mut self, a: f64, other: &Self) {
        self.zip_apply(other, |x, y| *x += a * y);
    }
    fn shape(&self) -> (usize, usize) {
        self.shape()
    }
}

/// Runs `t` synchronous gossip rounds `z_i ← Σ_{j ∈ N_i ∪ {i}} W_ij z_j`.
pub fn gossip<T: Payload>(w: &MixingMatrix, z: &[T], t: usize) -> Result<Vec<T>> {
    if z.len() != w.n() {
        return Err(Error::DimensionMismatch(format!("{} blocks for a {}-agent mixing matrix", z.len(), w.n())));
    }
    if let Some(first) = z.first() {
        let shape = first.shape();
        if z.iter().any(|b| b.shape() != shape) {
            return Err(Error::DimensionMismatch("stacked blocks differ in shape".into()));
        }
    }
    let mut cur = z.to_vec();
    for _ in 0..t {
        cur = gossip_round(w, &cur);
    }
    Ok(cur)
}

fn gossip_round<T: Payload>(w: &MixingMatrix, z: &[T]) -> Vec<T> {
    w.stencil
        .iter()
        .map(|row| {
            let mut acc = z[0].zeroed();
            for &(j, wij) in row {
                acc.add_scaled(wij, &z[j]);
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::dispersion;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn two_node_complete_graph() {
        for seed in 0..5 {
            let g = generate_er_graph(2, 1.0, seed).unwrap();
            assert_eq!(g.edges(), &[(0, 1)]);
        }
    }

    #[test]
    fn er_is_deterministic_per_seed() {
        let a = generate_er_graph(10, 0.5, 7).unwrap();
        let b = generate_er_graph(10, 0.5, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.is_connected());
    }

    #[test]
    fn er_rejects_bad_parameters() {
        assert!(generate_er_graph(1, 0.5, 0).is_err());
        assert!(generate_er_graph(5, 0.0, 0).is_err());
        assert!(generate_er_graph(5, 1.5, 0).is_err());
    }

    #[test]
    fn er_exhaustion_is_reported() {
        let err = generate_er_graph_capped(30, 0.01, 3, 5).unwrap_err();
        assert!(err.to_string().contains("graph generation exhausted"));
    }

    #[test]
    fn metropolis_on_two_nodes() {
        let w = metropolis_weights(&Graph::complete(2)).unwrap();
        for v in w.weights().iter() {
            assert_eq!(*v, 0.5);
        }
        assert!(w.rho().abs() < 1e-15);
    }

    #[test]
    fn metropolis_on_three_node_path() {
        let w = metropolis_weights(&Graph::path(3)).unwrap();
        let m = w.weights();
        assert!((m[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((m[(1, 2)] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m[(0, 2)], 0.0);
        let diag = [2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0];
        for (i, d) in diag.iter().enumerate() {
            assert!((m[(i, i)] - d).abs() < 1e-15);
        }
    }

    #[test]
    fn from_dense_rejects_zero_diagonal() {
        let w = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(MixingMatrix::from_dense(w).is_err());
    }

    #[test]
    fn disconnected_graph_is_not_contractive() {
        let g = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        let err = metropolis_weights(&g).unwrap_err();
        assert!(matches!(err, Error::RhoNotContractive(_)));
    }

    #[test]
    fn gossip_zero_rounds_is_identity() {
        let w = metropolis_weights(&Graph::path(4)).unwrap();
        let z: Vec<Vector> = (0..4).map(|i| Vector::from_vec(vec![i as f64, 1.0])).collect();
        assert_eq!(gossip(&w, &z, 0).unwrap(), z);
    }

    #[test]
    fn gossip_consensus_is_a_fixed_point() {
        let w = metropolis_weights(&Graph::path(5)).unwrap();
        let z = vec![Vector::from_vec(vec![1.5, -2.0]); 5];
        let out = gossip(&w, &z, 7).unwrap();
        for b in out {
            assert!((b - &z[0]).amax() < 1e-15);
        }
    }

    #[test]
    fn gossip_contracts_dispersion() {
        let g = generate_er_graph(10, 0.5, 11).unwrap();
        let w = metropolis_weights(&g).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let z: Vec<Vector> = (0..10)
            .map(|_| Vector::from_fn(4, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        let out = gossip(&w, &z, 3).unwrap();
        assert!(dispersion(&out) <= w.rho().powi(3) * dispersion(&z) + 1e-10);
    }

    #[test]
    fn gossip_on_matrices_keeps_symmetry() {
        let w = metropolis_weights(&Graph::path(3)).unwrap();
        let z: Vec<Matrix> = (0..3)
            .map(|i| Matrix::from_row_slice(2, 2, &[i as f64, 1.0 + i as f64, 1.0 + i as f64, 2.0]))
            .collect();
        for m in gossip(&w, &z, 4).unwrap() {
            assert_eq!(m, m.transpose());
        }
    }

    #[test]
    fn gossip_rejects_wrong_block_count() {
        let w = metropolis_weights(&Graph::path(3)).unwrap();
        let z = vec![Vector::zeros(2); 4];
        assert!(matches!(gossip(&w, &z, 1), Err(Error::DimensionMismatch(_))));
    }
}
