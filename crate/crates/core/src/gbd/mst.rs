use std::cmp::Ordering;

use super::graph::{Edge, WeightedNeighborGraph};
use crate::scalar::Real;

/// Spanning forest over `n_nodes` local nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree<R> {
    pub node_ids: Vec<usize>,
    pub edges: Vec<Edge<R>>,
}

impl<R: Real> SpanningTree<R> {
    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn total_weight(&self) -> R {
        self.edges.iter().map(|e| e.weight).sum()
    }

    /// Component id per local node, numbered by first appearance.
    pub fn components(&self) -> Vec<usize> {
        let mut uf = UnionFind::new(self.node_count());
        for e in &self.edges {
            uf.union(e.u, e.v);
        }
        let mut ids = vec![usize::MAX; self.node_count()];
        let mut next = 0;
        (0..self.node_count())
            .map(|i| {
                let root = uf.find(i);
                if ids[root] == usize::MAX {
                    ids[root] = next;
                    next += 1;
                }
                ids[root]
            })
            .collect()
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Kruskal's algorithm; edges are considered in `(weight, u, v)` order, so the
/// result is deterministic under weight ties. Disconnected input yields a forest.
pub fn minimum_spanning_tree<R: Real>(graph: &WeightedNeighborGraph<R>) -> SpanningTree<R> {
    let mut edges = graph.edges.clone();
    edges.sort_by(|a, b| {
        a.weight
            .partial_cmp(&b.weight)
            .expect("finite weights")
            .then(a.u.cmp(&b.u))
            .then(a.v.cmp(&b.v))
    });
    let mut uf = UnionFind::new(graph.node_count());
    let mut kept = Vec::with_capacity(graph.node_count().saturating_sub(1));
    for e in edges {
        if uf.union(e.u, e.v) {
            kept.push(e);
        }
    }
    kept.sort_by_key(|e| (e.u, e.v));
    SpanningTree {
        node_ids: graph.node_ids.clone(),
        edges: kept,
    }
}
