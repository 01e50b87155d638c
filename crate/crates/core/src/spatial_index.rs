//! Exact k-nearest-neighbor search over 3-D coordinates with a bucketed kd-tree.
//!
//! Results are ordered by `(squared distance, point index)`, so ties always
//! resolve toward the lower index and the output does not depend on the
//! number of worker threads.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node<R> {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: R, left: usize, right: usize },
}

/// Immutable kd-tree over a fixed point set.
#[derive(Debug, Clone)]
pub struct SpatialIndex<R> {
    points: Vec<[R; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node<R>>,
}

/// k neighbors per query, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList<R> {
    k: usize,
    indices: Vec<usize>,
    sq_distances: Vec<R>,
}

impl<R: Real> NeighborList<R> {
    pub fn query_count(&self) -> usize {
        self.indices.len().checked_div(self.k).unwrap_or(0)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn indices(&self, row: usize) -> &[usize] {
        &self.indices[row * self.k..(row + 1) * self.k]
    }

    pub fn sq_distances(&self, row: usize) -> &[R] {
        &self.sq_distances[row * self.k..(row + 1) * self.k]
    }

    pub fn all_indices(&self) -> &[usize] {
        &self.indices
    }
}

#[derive(Clone, Copy)]
struct Candidate<R> {
    sq_dist: R,
    index: usize,
}

impl<R: Real> PartialEq for Candidate<R> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<R: Real> Eq for Candidate<R> {}
impl<R: Real> PartialOrd for Candidate<R> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<R: Real> Ord for Candidate<R> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sq_dist
            .partial_cmp(&other.sq_dist)
            .expect("finite distances")
            .then(self.index.cmp(&other.index))
    }
}

#[inline]
pub(crate) fn sq_dist<R: Real>(a: &[R; 3], b: &[R; 3]) -> R {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl<R: Real> SpatialIndex<R> {
    /// Builds an index over an N×3 coordinate array.
    pub fn build(coords: &Array2<R>) -> Result<Self> {
        if coords.ncols() != 3 {
            return Err(Error::ShapeMismatch(format!("coords must be N×3, got N×{}", coords.ncols())));
        }
        let points: Vec<[R; 3]> = coords.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect();
        Self::from_points(points)
    }

    pub fn from_points(points: Vec<[R; 3]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput { row: 0 });
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        let n = order.len();
        build_node(&points, &mut order, 0, n, &mut nodes);
        Ok(Self { points, order, nodes })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> [R; 3] {
        self.points[i]
    }

    /// Exact k nearest neighbors of `target` among points accepted by `keep`,
    /// sorted ascending by `(squared distance, index)`. Returns fewer than `k`
    /// entries when fewer points are accepted.
    pub fn nearest_filtered(
        &self,
        target: &[R; 3],
        k: usize,
        keep: impl Fn(usize) -> bool,
    ) -> Vec<(usize, R)> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate<R>> = BinaryHeap::with_capacity(k + 1);
        self.search(0, target, k, &keep, &mut heap);
        let mut found = heap.into_vec();
        found.sort();
        found.into_iter().map(|c| (c.index, c.sq_dist)).collect()
    }

    fn search(
        &self,
        node: usize,
        target: &[R; 3],
        k: usize,
        keep: &impl Fn(usize) -> bool,
        heap: &mut BinaryHeap<Candidate<R>>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &index in &self.order[start..end] {
                    if !keep(index) {
                        continue;
                    }
                    let cand = Candidate {
                        sq_dist: sq_dist(target, &self.points[index]),
                        index,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = target[axis] - value;
                let (near, far) = if diff < R::zero() { (left, right) } else { (right, left) };
                self.search(near, target, k, keep, heap);
                // Equality must still be visited: a tie may carry a lower index.
                let bound = diff * diff;
                if heap.len() < k || bound <= heap.peek().unwrap().sq_dist {
                    self.search(far, target, k, keep, heap);
                }
            }
        }
    }

    /// kNN for each query point index, skipping points flagged in `exclude`
    /// (a mask over all indexed points). Does not exclude the query itself
    /// unless it is flagged.
    pub fn knn(&self, queries: &[usize], k: usize, exclude: Option<&[bool]>) -> Result<NeighborList<R>> {
        self.knn_impl(queries, k, exclude, false)
    }

    /// kNN for each query, never returning the query point itself.
    pub fn knn_excluding_self(
        &self,
        queries: &[usize],
        k: usize,
        exclude: Option<&[bool]>,
    ) -> Result<NeighborList<R>> {
        self.knn_impl(queries, k, exclude, true)
    }

    fn knn_impl(
        &self,
        queries: &[usize],
        k: usize,
        exclude: Option<&[bool]>,
        exclude_self: bool,
    ) -> Result<NeighborList<R>> {
        let n = self.len();
        if let Some(mask) = exclude {
            if mask.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "exclusion mask has {} entries for {n} points",
                    mask.len()
                )));
            }
        }
        let excluded = exclude.map_or(0, |m| m.iter().filter(|&&e| e).count());
        for &q in queries {
            if q >= n {
                return Err(Error::IndexOutOfRange { index: q, len: n });
            }
            let self_slot = exclude_self && !exclude.is_some_and(|m| m[q]);
            let available = n - excluded - self_slot as usize;
            if k > available {
                return Err(Error::KTooLarge { k, available });
            }
        }
        let rows: Vec<Vec<(usize, R)>> = queries
            .par_iter()
            .map(|&q| {
                let target = self.points[q];
                self.nearest_filtered(&target, k, |i| {
                    !(exclude_self && i == q) && !exclude.is_some_and(|m| m[i])
                })
            })
            .collect();
        let mut indices = Vec::with_capacity(queries.len() * k);
        let mut sq_distances = Vec::with_capacity(queries.len() * k);
        for row in rows {
            for (i, d) in row {
                indices.push(i);
                sq_distances.push(d);
            }
        }
        Ok(NeighborList { k, indices, sq_distances })
    }
}

fn build_node<R: Real>(
    points: &[[R; 3]],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node<R>>,
) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let slice = &mut order[start..end];
    let mut axis = 0;
    let mut best_spread = R::neg_infinity();
    #[allow(clippy::needless_range_loop)]
    for a in 0..3 {
        let (lo, hi) = slice
            .iter()
            .map(|&i| points[i][a])
            .fold((R::infinity(), R::neg_infinity()), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if hi - lo > best_spread {
            best_spread = hi - lo;
            axis = a;
        }
    }
    if best_spread == R::zero() {
        // All coincident; a leaf holds them regardless of size.
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    slice.sort_by(|&a, &b| {
        points[a][axis]
            .partial_cmp(&points[b][axis])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mid = slice.len() / 2;
    let value = points[slice[mid]][axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let left = build_node(points, order, start, start + mid, nodes);
    let right = build_node(points, order, start + mid, end, nodes);
    nodes[id] = Node::Split { axis, value, left, right };
    id
}
