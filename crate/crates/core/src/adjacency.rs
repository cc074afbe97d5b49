//! Adjacency graph of extreme rays, maximal cliques, and the sparsity
//! notions built on them.

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::cone::DdPair;
use crate::linalg::DenseMatrix;
use crate::lp::{solve_lp, LpStatus};
use crate::scalar::{Real, Scalar};

pub const DEFAULT_CLIQUE_CAP: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdjacencyError {
    #[error("ray index {index} out of range (d = {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("adjacency of a ray with itself is undefined")]
    SamePair,
    #[error("more than {cap} maximal cliques")]
    CliqueExplosion { cap: usize },
    #[error("coefficient {index} is negative")]
    NegativeCoefficient { index: usize },
    #[error("coefficient vector has length {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("Δb differs from μ by {residual:e}")]
    InfeasibleCertificate { residual: f64 },
    #[error("linear program for the representation range failed: {0:?}")]
    LpFailure(LpStatus),
}

fn check_pair<T>(pair: &DdPair<T>, i: usize, j: usize) -> Result<(), AdjacencyError>
where
    T: Scalar,
{
    let d = pair.ray_count();
    for k in [i, j] {
        if k >= d {
            return Err(AdjacencyError::IndexOutOfRange { index: k, len: d });
        }
    }
    if i == j {
        return Err(AdjacencyError::SamePair);
    }
    Ok(())
}

fn common_zeros<T: Scalar>(pair: &DdPair<T>, i: usize, j: usize) -> FixedBitSet {
    let mut common = pair.zero_bits(i).expect("checked").clone();
    common.intersect_with(pair.zero_bits(j).expect("checked"));
    common
}

/// Rank of the rows active at both rays equals `n − 2`.
pub fn algebraic_adjacency_test<T: Scalar>(pair: &DdPair<T>, i: usize, j: usize) -> Result<bool, AdjacencyError> {
    check_pair(pair, i, j)?;
    let common = common_zeros(pair, i, j);
    let n = pair.dim();
    if common.count_ones(..) + 2 < n {
        return Ok(false);
    }
    Ok(pair.row_rank(common.ones()) + 2 == n)
}

/// No third ray is active on every row active at both `i` and `j`.
pub fn combinatorial_adjacency_test<T: Scalar>(pair: &DdPair<T>, i: usize, j: usize) -> Result<bool, AdjacencyError> {
    check_pair(pair, i, j)?;
    let common = common_zeros(pair, i, j);
    Ok((0..pair.ray_count())
        .filter(|&k| k != i && k != j)
        .all(|k| !common.is_subset(pair.zero_bits(k).expect("in range"))))
}

/// Undirected simple graph on rays `0..d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    neighbors: Vec<FixedBitSet>,
}

impl AdjacencyGraph {
    pub fn empty(d: usize) -> Self {
        Self { neighbors: vec![FixedBitSet::with_capacity(d); d] }
    }

    pub fn from_edges(d: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, AdjacencyError> {
        let mut g = Self::empty(d);
        for (i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<(), AdjacencyError> {
        let d = self.node_count();
        for k in [i, j] {
            if k >= d {
                return Err(AdjacencyError::IndexOutOfRange { index: k, len: d });
            }
        }
        if i == j {
            return Err(AdjacencyError::SamePair);
        }
        self.neighbors[i].insert(j);
        self.neighbors[j].insert(i);
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors.get(i).is_some_and(|n| n.contains(j))
    }

    /// `E_i`
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        self.neighbors[i].ones().collect()
    }

    pub(crate) fn neighbor_bits(&self, i: usize) -> &FixedBitSet {
        &self.neighbors[i]
    }

    /// Edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, n) in self.neighbors.iter().enumerate() {
            out.extend(n.ones().filter(|&j| j > i).map(|j| (i, j)));
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(|n| n.count_ones(..)).sum::<usize>() / 2
    }

    pub fn is_clique(&self, nodes: &[usize]) -> bool {
        nodes.iter().enumerate().all(|(k, &i)| {
            i < self.node_count() && nodes[k + 1..].iter().all(|&j| i != j && self.has_edge(i, j))
        })
    }
}

/// Graph whose edges are the pairs passing [`algebraic_adjacency_test`].
pub fn build_adjacency_graph<T: Scalar>(pair: &DdPair<T>) -> Result<AdjacencyGraph, AdjacencyError> {
    let d = pair.ray_count();
    let mut g = AdjacencyGraph::empty(d);
    for i in 0..d {
        for j in i + 1..d {
            if algebraic_adjacency_test(pair, i, j)? {
                g.add_edge(i, j)?;
            }
        }
    }
    Ok(g)
}

/// Maximal cliques, each sorted, listed in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliqueSet {
    cliques: Vec<Vec<usize>>,
}

impl CliqueSet {
    pub fn new(mut cliques: Vec<Vec<usize>>) -> Self {
        for c in cliques.iter_mut() {
            c.sort_unstable();
        }
        cliques.sort();
        Self { cliques }
    }

    pub fn cliques(&self) -> &[Vec<usize>] {
        &self.cliques
    }

    pub fn len(&self) -> usize {
        self.cliques.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cliques.is_empty()
    }

    pub fn get(&self, w: usize) -> Option<&[usize]> {
        self.cliques.get(w).map(Vec::as_slice)
    }

    /// Cliques containing each node.
    pub fn memberships(&self, d: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); d];
        for (w, c) in self.cliques.iter().enumerate() {
            for &i in c {
                out[i].push(w);
            }
        }
        out
    }
}

pub fn enumerate_maximal_cliques(graph: &AdjacencyGraph) -> Result<CliqueSet, AdjacencyError> {
    enumerate_maximal_cliques_capped(graph, DEFAULT_CLIQUE_CAP)
}

/// Bron–Kerbosch with Tomita pivoting.
pub fn enumerate_maximal_cliques_capped(graph: &AdjacencyGraph, cap: usize) -> Result<CliqueSet, AdjacencyError> {
    let d = graph.node_count();
    let mut out = Vec::new();
    let mut p = FixedBitSet::with_capacity(d);
    p.insert_range(..);
    let mut r = Vec::new();
    bron_kerbosch(graph, &mut r, p, FixedBitSet::with_capacity(d), &mut out, cap)?;
    Ok(CliqueSet::new(out))
}

fn bron_kerbosch(
    g: &AdjacencyGraph,
    r: &mut Vec<usize>,
    mut p: FixedBitSet,
    mut x: FixedBitSet,
    out: &mut Vec<Vec<usize>>,
    cap: usize,
) -> Result<(), AdjacencyError> {
    if p.is_clear() {
        if x.is_clear() && !r.is_empty() {
            if out.len() == cap {
                return Err(AdjacencyError::CliqueExplosion { cap });
            }
            out.push(r.clone());
        }
        return Ok(());
    }
    // pivot maximising |P ∩ N(u)|
    let pivot = p
        .ones()
        .chain(x.ones())
        .max_by_key(|&u| (g.neighbor_bits(u).intersection(&p).count(), std::cmp::Reverse(u)))
        .expect("P nonempty");
    let candidates: Vec<usize> = p.difference(g.neighbor_bits(pivot)).collect();
    for v in candidates {
        let nv = g.neighbor_bits(v);
        let mut p2 = p.clone();
        p2.intersect_with(nv);
        let mut x2 = x.clone();
        x2.intersect_with(nv);
        r.push(v);
        bron_kerbosch(g, r, p2, x2, out, cap)?;
        r.pop();
        p.set(v, false);
        x.insert(v);
    }
    Ok(())
}

fn check_coefficients<T: Scalar>(b: &[T], d: usize) -> Result<(), AdjacencyError> {
    if b.len() != d {
        return Err(AdjacencyError::LengthMismatch { got: b.len(), expected: d });
    }
    if let Some(index) = b.iter().position(|v| *v < T::zero()) {
        return Err(AdjacencyError::NegativeCoefficient { index });
    }
    Ok(())
}

/// `{i : b_i > tol}`
pub fn support<T: Scalar>(b: &[T], tol: &T) -> Vec<usize> {
    b.iter().enumerate().filter(|(_, v)| *v > tol).map(|(i, _)| i).collect()
}

/// The support of `b` is a clique of size at most `s`.
pub fn is_conically_sparse<T: Scalar>(
    graph: &AdjacencyGraph,
    b: &[T],
    s: usize,
    tol: &T,
) -> Result<bool, AdjacencyError> {
    check_coefficients(b, graph.node_count())?;
    let supp = support(b, tol);
    Ok(supp.len() <= s && graph.is_clique(&supp))
}

/// Whether `b` is the only nonnegative solution of `Δb' = μ`: for every
/// coordinate the largest and smallest feasible value of `b'_k` coincide.
pub fn representation_uniqueness<T: Real>(
    pair: &DdPair<T>,
    mu: &[T],
    b: &[T],
    tol: T,
) -> Result<bool, AdjacencyError> {
    let d = pair.ray_count();
    check_coefficients(b, d)?;
    if mu.len() != pair.dim() {
        return Err(AdjacencyError::LengthMismatch { got: mu.len(), expected: pair.dim() });
    }
    let delta: &DenseMatrix<T> = pair.vertex().matrix();
    let fitted = delta.mul_vec(b);
    let scale = mu.iter().fold(T::one(), |acc, v| acc.max(v.abs()));
    let residual = fitted.iter().zip(mu).fold(T::zero(), |acc, (f, m)| acc.max((*f - *m).abs()));
    if residual > tol * scale {
        return Err(AdjacencyError::InfeasibleCertificate { residual: residual.to_f64_lossy() });
    }
    let lp_tol = T::from(1e-12).unwrap();
    let spread_tol = tol * b.iter().fold(T::one(), |acc, v| acc.max(*v));
    for k in 0..d {
        let mut c = vec![T::zero(); d];
        c[k] = T::one();
        let hi = solve_lp(delta, mu, &c, true, lp_tol);
        if hi.status == LpStatus::Unbounded {
            return Ok(false);
        }
        if hi.status != LpStatus::Optimal {
            return Err(AdjacencyError::LpFailure(hi.status));
        }
        let lo = solve_lp(delta, mu, &c, false, lp_tol);
        if lo.status != LpStatus::Optimal {
            return Err(AdjacencyError::LpFailure(lo.status));
        }
        if hi.objective - lo.objective > spread_tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// All coefficients above `eps` lie in the closed neighbourhood `{i} ∪ E_i`
/// of a single ray.
pub fn is_weakly_eps_sparse<T: Scalar>(graph: &AdjacencyGraph, b: &[T], eps: &T) -> Result<bool, AdjacencyError> {
    check_coefficients(b, graph.node_count())?;
    let supp = support(b, eps);
    if supp.len() <= 1 {
        return Ok(true);
    }
    Ok((0..graph.node_count()).any(|i| supp.iter().all(|&j| j == i || graph.has_edge(i, j))))
}
