//! Directed communication graphs.
//!
//! Orientation is fixed crate-wide: `a_ij = 1` means the output of agent `j`
//! enters the context of agent `i`. Rows are receivers, columns are senders.

mod spectral;
mod topology;

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use self::spectral::{spectral_summary, SpectralSummary, DEFAULT_MAX_ITER, DEFAULT_TOL};
pub use self::topology::{
    make_chain, make_complete, make_layered_horizontal, make_star, TopologyConfig, TopologyKind,
};

/// Ordered pair `from -> to`: the output of `from` enters the context of `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
}

impl Edge {
    pub const fn new(from: usize, to: usize) -> Self {
        Self { from, to }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

/// Immutable directed graph over `n` agents without self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    n: usize,
    kind: TopologyKind,
    seed: Option<u64>,
    // row-major, adjacency[i * n + j] = a_ij
    adjacency: Vec<bool>,
    in_lists: Vec<Vec<usize>>,
    out_lists: Vec<Vec<usize>>,
}

impl DirectedGraph {
    /// Builds a graph from an explicit edge list. Duplicate edges collapse.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        Self::build(n, TopologyKind::Explicit, None, edges)
    }

    pub(crate) fn build(
        n: usize,
        kind: TopologyKind,
        seed: Option<u64>,
        edges: impl IntoIterator<Item = Edge>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize { n, min: 1 });
        }
        let mut adjacency = vec![false; n * n];
        for e in edges {
            for idx in [e.from, e.to] {
                if idx >= n {
                    return Err(Error::IndexOutOfRange { index: idx, n });
                }
            }
            if e.from == e.to {
                return Err(Error::SelfLoop(e.from));
            }
            adjacency[e.to * n + e.from] = true;
        }
        let mut in_lists = vec![Vec::new(); n];
        let mut out_lists = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                if adjacency[i * n + j] {
                    in_lists[i].push(j);
                    out_lists[j].push(i);
                }
            }
        }
        Ok(Self {
            n,
            kind,
            seed,
            adjacency,
            in_lists,
            out_lists,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    /// Seed that drove any random construction choices.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// `a_ij`: whether `sender`'s output reaches `receiver`.
    pub fn a(&self, receiver: usize, sender: usize) -> bool {
        self.adjacency[receiver * self.n + sender]
    }

    pub fn edge_count(&self) -> usize {
        self.in_lists.iter().map(Vec::len).sum()
    }

    /// Edges sorted by `(from, to)`.
    pub fn edges(&self) -> Vec<Edge> {
        let mut edges: Vec<Edge> = self
            .out_lists
            .iter()
            .enumerate()
            .flat_map(|(from, outs)| outs.iter().map(move |&to| Edge::new(from, to)))
            .collect();
        edges.sort_unstable();
        edges
    }

    /// Upstream agents of `i`, ascending.
    pub fn in_neighbors(&self, i: usize) -> Result<&[usize]> {
        self.check(i)?;
        Ok(&self.in_lists[i])
    }

    /// Downstream agents of `j`, ascending.
    pub fn out_neighbors(&self, j: usize) -> Result<&[usize]> {
        self.check(j)?;
        Ok(&self.out_lists[j])
    }

    // Unchecked accessors for hot loops where the index comes from 0..n.
    pub(crate) fn ins(&self, i: usize) -> &[usize] {
        &self.in_lists[i]
    }

    pub(crate) fn outs(&self, j: usize) -> &[usize] {
        &self.out_lists[j]
    }

    pub fn check(&self, i: usize) -> Result<()> {
        if i < self.n {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: i, n: self.n })
        }
    }

    pub fn max_in_degree(&self) -> usize {
        self.in_lists.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Number of other agents reachable from `v` along directed paths.
    pub fn downstream_reach(&self, v: usize) -> Result<usize> {
        self.check(v)?;
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([v]);
        seen[v] = true;
        let mut count = 0;
        while let Some(u) = queue.pop_front() {
            for &w in &self.out_lists[u] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        Ok(count)
    }

    /// Same agents with every edge reversed.
    pub fn transposed(&self) -> Self {
        let edges = self.edges().into_iter().map(|e| Edge::new(e.to, e.from));
        Self::build(self.n, TopologyKind::Explicit, self.seed, edges).expect("transpose of a valid graph")
    }

    /// Relabels agent `v` as `perm[v]`. `perm` must be a permutation of `0..n`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        let distinct: BTreeSet<usize> = perm.iter().copied().collect();
        if perm.len() != self.n || distinct.len() != self.n || distinct.iter().any(|&p| p >= self.n) {
            return Err(Error::InvalidConfig(alloc::format!(
                "relabeling is not a permutation of 0..{}",
                self.n
            )));
        }
        let edges = self
            .edges()
            .into_iter()
            .map(|e| Edge::new(perm[e.from], perm[e.to]));
        Self::build(self.n, TopologyKind::Explicit, self.seed, edges)
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.in_lists[i].iter().map(|&j| x[j]).sum();
        }
    }

    /// Largest row sum of `A` (the maximum in-degree), an upper bound on `rho`.
    pub fn max_row_sum(&self) -> f64 {
        self.max_in_degree() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explicit_edges_and_orientation() {
        let g = DirectedGraph::from_edges(3, [Edge::new(0, 1), Edge::new(1, 2), Edge::new(0, 1)]).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert!(g.a(1, 0));
        assert!(!g.a(0, 1));
        assert_eq!(g.in_neighbors(2).unwrap(), &[1]);
        assert_eq!(g.out_neighbors(0).unwrap(), &[1]);
    }

    #[test]
    fn rejects_self_loops_and_bad_indices() {
        assert_eq!(
            DirectedGraph::from_edges(3, [Edge::new(1, 1)]),
            Err(Error::SelfLoop(1))
        );
        assert_eq!(
            DirectedGraph::from_edges(3, [Edge::new(0, 3)]),
            Err(Error::IndexOutOfRange { index: 3, n: 3 })
        );
        assert!(DirectedGraph::from_edges(0, []).is_err());
    }

    #[test]
    fn in_neighbors_examples() {
        let star = make_star(5).unwrap();
        assert_eq!(star.in_neighbors(0).unwrap(), &[1, 2, 3, 4]);
        let chain = make_chain(5).unwrap();
        assert!(chain.in_neighbors(0).unwrap().is_empty());
        assert_eq!(chain.in_neighbors(3).unwrap(), &[2]);
        assert_eq!(
            chain.in_neighbors(5),
            Err(Error::IndexOutOfRange { index: 5, n: 5 })
        );
    }

    #[test]
    fn reach_and_transpose() {
        let chain = make_chain(5).unwrap();
        assert_eq!(chain.downstream_reach(0).unwrap(), 4);
        assert_eq!(chain.downstream_reach(4).unwrap(), 0);
        let t = chain.transposed();
        assert_eq!(t.downstream_reach(4).unwrap(), 4);
    }

    #[test]
    fn edge_display() {
        assert_eq!(alloc::format!("{}", Edge::new(3, 0)), "3->0");
    }
}
