use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hua::{similarity_row, RegionState, SimDMode};
use crate::pointset::PointProbabilityCloud;
use crate::scalar::Real;
use crate::spatial_index::SpatialIndex;
use crate::uncertainty::ScoreField;

/// Undirected weighted edge between local node indices, `u < v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<R> {
    pub u: usize,
    pub v: usize,
    pub weight: R,
}

/// How two directed similarity values collapse into one undirected weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Symmetrize {
    #[default]
    Min,
    /// Keep the value seen first (from the lower-index endpoint's row).
    First,
}

impl Symmetrize {
    pub fn as_str(self) -> &'static str {
        match self {
            Symmetrize::Min => "min",
            Symmetrize::First => "first",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "min" => Some(Symmetrize::Min),
            "first" => Some(Symmetrize::First),
            _ => None,
        }
    }
}

/// kNN graph over region points; edge endpoints are positions in `node_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNeighborGraph<R> {
    pub node_ids: Vec<usize>,
    pub edges: Vec<Edge<R>>,
}

impl<R: Real> WeightedNeighborGraph<R> {
    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    /// Builds a graph from local edges, merging duplicates with `min`.
    pub fn from_edges(node_ids: Vec<usize>, edges: impl IntoIterator<Item = (usize, usize, R)>) -> Self {
        let mut map = BTreeMap::new();
        for (a, b, w) in edges {
            let key = (a.min(b), a.max(b));
            map.entry(key)
                .and_modify(|old: &mut R| *old = old.min(w))
                .or_insert(w);
        }
        Self {
            node_ids,
            edges: map.into_iter().map(|((u, v), weight)| Edge { u, v, weight }).collect(),
        }
    }
}

/// Connects each region point to its `k` nearest region neighbors, weighted by
/// the region-growing similarity.
pub fn build_region_graph<R: Real>(
    cloud: &PointProbabilityCloud<R>,
    region: &RegionState<R>,
    scores: &ScoreField<R>,
    k: usize,
    mode: SimDMode,
    symmetrize: Symmetrize,
) -> Result<WeightedNeighborGraph<R>> {
    let nodes = region.members.clone();
    if nodes.len() <= 1 {
        return Err(Error::RegionTooSmall { size: nodes.len() });
    }
    if scores.len() != cloud.n_points() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores for {} points",
            scores.len(),
            cloud.n_points()
        )));
    }
    if let Some(&bad) = nodes.iter().find(|&&i| i >= cloud.n_points()) {
        return Err(Error::IndexOutOfRange { index: bad, len: cloud.n_points() });
    }
    let local_points: Vec<[R; 3]> = nodes.iter().map(|&i| cloud.point(i)).collect();
    let local_scores: Vec<R> = nodes.iter().map(|&i| scores.scores[i]).collect();
    let index = SpatialIndex::from_points(local_points)?;
    let k = k.min(nodes.len() - 1).max(1);
    let all: Vec<usize> = (0..nodes.len()).collect();
    let neighbors = index.knn_excluding_self(&all, k, None)?;

    let rows: Vec<Vec<(usize, usize, R)>> = all
        .par_iter()
        .map(|&i| {
            let nbrs = neighbors.indices(i);
            let sims = similarity_row(
                local_scores[i],
                nbrs.iter().map(|&j| local_scores[j]),
                neighbors.sq_distances(i),
                mode,
            );
            nbrs.iter().zip(sims).map(|(&j, w)| (i, j, w)).collect()
        })
        .collect();

    let mut map: BTreeMap<(usize, usize), R> = BTreeMap::new();
    for (a, b, w) in rows.into_iter().flatten() {
        let key = (a.min(b), a.max(b));
        match (map.get_mut(&key), symmetrize) {
            (Some(old), Symmetrize::Min) => *old = old.min(w),
            (Some(_), Symmetrize::First) => {}
            (None, _) => {
                map.insert(key, w);
            }
        }
    }
    Ok(WeightedNeighborGraph {
        node_ids: nodes,
        edges: map.into_iter().map(|((u, v), weight)| Edge { u, v, weight }).collect(),
    })
}
