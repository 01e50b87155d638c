//! Boundary detection inside a grown region.
//!
//! The region is embedded in a similarity-weighted kNN graph and reduced to
//! its minimum spanning tree. A two-component mixture over tree edge weights
//! gives the cut threshold `mu_1 - epsilon * sigma_1`; edges above it are
//! removed and the surviving components whose size is not a low outlier
//! become unknown objects.

mod gmm;
mod graph;
mod mst;

pub use gmm::{fit_edge_weight_gmm, GmmConfig, GmmFit};
pub use graph::{build_region_graph, Edge, Symmetrize, WeightedNeighborGraph};
pub use mst::{minimum_spanning_tree, SpanningTree};

use log::warn;

use crate::error::{Error, Result};
use crate::hua::{RegionState, SimDMode};
use crate::pointset::PointProbabilityCloud;
use crate::scalar::{median, Real};
use crate::uncertainty::ScoreField;

#[derive(Debug, Clone, PartialEq)]
pub struct GbdConfig {
    pub k: usize,
    pub epsilon: f64,
    pub min_object_points: usize,
    pub sim_d_mode: SimDMode,
    pub symmetrize: Symmetrize,
    pub gmm: GmmConfig,
    /// Percentile of tree edge weights used when the mixture fit is degenerate.
    pub fallback_percentile: f64,
}

impl Default for GbdConfig {
    fn default() -> Self {
        Self {
            k: 16,
            epsilon: 3.0,
            min_object_points: 10,
            sim_d_mode: SimDMode::Inverted,
            symmetrize: Symmetrize::Min,
            gmm: GmmConfig::default(),
            fallback_percentile: 0.9,
        }
    }
}

/// Detected unknown objects and the region points rejected from them.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UnknownMask {
    /// Sorted global point indices per object, largest object first.
    pub objects: Vec<Vec<usize>>,
    /// Sorted global indices of rejected region points.
    pub rejected: Vec<usize>,
}

impl UnknownMask {
    /// Sorted union of all objects.
    pub fn unknown_points(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.objects.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    /// Object id for each of `members` (in order), `-1` when rejected.
    pub fn region_labels(&self, members: &[usize]) -> Vec<i32> {
        let mut lookup = std::collections::HashMap::new();
        for (id, obj) in self.objects.iter().enumerate() {
            for &p in obj {
                lookup.insert(p, id as i32);
            }
        }
        members.iter().map(|p| *lookup.get(p).unwrap_or(&-1)).collect()
    }

    /// Inverse of [`UnknownMask::region_labels`].
    pub fn from_region_labels(members: &[usize], labels: &[i32]) -> Result<Self> {
        if members.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} region points",
                labels.len(),
                members.len()
            )));
        }
        let n_objects = labels.iter().copied().max().unwrap_or(-1) + 1;
        let mut objects = vec![Vec::new(); n_objects.max(0) as usize];
        let mut rejected = Vec::new();
        for (&p, &l) in members.iter().zip(labels) {
            if l < 0 {
                rejected.push(p);
            } else {
                objects[l as usize].push(p);
            }
        }
        for o in &mut objects {
            o.sort_unstable();
        }
        rejected.sort_unstable();
        Ok(Self { objects, rejected })
    }
}

/// Removes every tree edge heavier than `mu_1 - epsilon * sigma_1`.
pub fn cut_edges<R: Real>(tree: &SpanningTree<R>, fit: &GmmFit<R>, epsilon: f64) -> SpanningTree<R> {
    cut_edges_at(tree, fit.threshold(epsilon))
}

pub fn cut_edges_at<R: Real>(tree: &SpanningTree<R>, threshold: R) -> SpanningTree<R> {
    SpanningTree {
        node_ids: tree.node_ids.clone(),
        edges: tree.edges.iter().copied().filter(|e| e.weight <= threshold).collect(),
    }
}

/// Size cutoff below which a component is rejected:
/// `max(min_object_points, median - 3 * MAD)`.
pub fn size_cutoff(sizes: &[usize], min_object_points: usize) -> f64 {
    let sizes: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let med = median(&sizes).unwrap_or(0.0);
    let deviations: Vec<f64> = sizes.iter().map(|s| (s - med).abs()).collect();
    let mad = median(&deviations).unwrap_or(0.0);
    (min_object_points as f64).max(med - 3.0 * mad)
}

/// Splits the forest into components and keeps those that are not low size
/// outliers. Singletons are always rejected; a lone multi-point component is
/// always kept.
pub fn merge_components<R: Real>(
    forest: &SpanningTree<R>,
    region: &RegionState<R>,
    min_object_points: usize,
) -> Result<UnknownMask> {
    if forest.node_ids != region.members {
        return Err(Error::ShapeMismatch("forest nodes differ from region members".into()));
    }
    let comp = forest.components();
    let n_comp = comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_comp];
    for (local, &c) in comp.iter().enumerate() {
        groups[c].push(forest.node_ids[local]);
    }
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let cutoff = size_cutoff(&sizes, min_object_points);
    let mut objects = Vec::new();
    let mut rejected = Vec::new();
    for g in groups {
        let keep = if n_comp == 1 { g.len() > 1 } else { g.len() > 1 && (g.len() as f64) >= cutoff };
        if keep {
            objects.push(g);
        } else {
            rejected.extend(g);
        }
    }
    for o in &mut objects {
        o.sort_unstable();
    }
    objects.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    rejected.sort_unstable();
    Ok(UnknownMask { objects, rejected })
}

/// Nearest-rank percentile (`q` in (0, 1]) of a non-empty slice.
fn percentile<R: Real>(values: &[R], q: f64) -> R {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Every intermediate product of boundary detection.
#[derive(Debug, Clone)]
pub struct GbdOutcome<R> {
    pub graph: WeightedNeighborGraph<R>,
    pub tree: SpanningTree<R>,
    /// `None` when the fit was degenerate and the percentile fallback was used.
    pub fit: Option<GmmFit<R>>,
    pub threshold: R,
    pub forest: SpanningTree<R>,
    pub mask: UnknownMask,
}

impl<R: Real> GbdOutcome<R> {
    pub fn component_sizes(&self) -> Vec<usize> {
        let comp = self.forest.components();
        let n = comp.iter().copied().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0; n];
        for c in comp {
            sizes[c] += 1;
        }
        sizes
    }
}

/// Cut threshold from the mixture fit, with the percentile fallback.
pub fn edge_threshold<R: Real>(tree: &SpanningTree<R>, config: &GbdConfig) -> (R, Option<GmmFit<R>>) {
    let weights: Vec<R> = tree.edges.iter().map(|e| e.weight).collect();
    match fit_edge_weight_gmm(&weights, &config.gmm) {
        Ok(fit) => (fit.threshold(config.epsilon), Some(fit)),
        Err(e) => {
            warn!("edge-weight mixture fit failed ({e}); falling back to the {} percentile", config.fallback_percentile);
            let t = if weights.is_empty() {
                R::infinity()
            } else {
                percentile(&weights, config.fallback_percentile)
            };
            (t, None)
        }
    }
}

pub fn detect_unknown_objects<R: Real>(
    cloud: &PointProbabilityCloud<R>,
    region: &RegionState<R>,
    scores: &ScoreField<R>,
    config: &GbdConfig,
) -> Result<GbdOutcome<R>> {
    let graph = build_region_graph(cloud, region, scores, config.k, config.sim_d_mode, config.symmetrize)?;
    let tree = minimum_spanning_tree(&graph);
    let (threshold, fit) = edge_threshold(&tree, config);
    let forest = cut_edges_at(&tree, threshold);
    let mask = merge_components(&forest, region, config.min_object_points)?;
    Ok(GbdOutcome {
        graph,
        tree,
        fit,
        threshold,
        forest,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hua::StopReason;
    use crate::uncertainty::{Polarity, ScoreMethod};
    use ndarray::{array, Array2};

    fn region(members: Vec<usize>) -> RegionState<f64> {
        RegionState {
            seeds: members.clone(),
            members,
            iteration: 0,
            mean_score_history: vec![0.0],
            stopped_reason: StopReason::StopCondition,
            global_mean: 0.0,
            global_std: 0.0,
            threshold: 0.0,
        }
    }

    fn forest_with_sizes(sizes: &[usize]) -> (SpanningTree<f64>, RegionState<f64>) {
        let mut edges = Vec::new();
        let mut start = 0;
        for &s in sizes {
            for i in start + 1..start + s {
                edges.push(Edge { u: i - 1, v: i, weight: 1.0 });
            }
            start += s;
        }
        let nodes: Vec<usize> = (0..start).collect();
        (SpanningTree { node_ids: nodes.clone(), edges }, region(nodes))
    }

    #[test]
    fn triangle_mst() {
        let g = WeightedNeighborGraph::from_edges(vec![0, 1, 2], [(0, 1, 1.0), (1, 2, 2.0), (0, 2, 3.0)]);
        let t = minimum_spanning_tree(&g);
        assert_eq!(t.total_weight(), 3.0);
        assert_eq!(t.edges.len(), 2);
    }

    #[test]
    fn tree_input_is_unchanged() {
        let g = WeightedNeighborGraph::from_edges(vec![0, 1, 2, 3], [(0, 1, 5.0), (1, 2, 1.0), (1, 3, 2.0)]);
        let t = minimum_spanning_tree(&g);
        assert_eq!(t.edges, g.edges);
    }

    #[test]
    fn disconnected_graph_gives_forest() {
        let g = WeightedNeighborGraph::from_edges(vec![0, 1, 2, 3], [(0, 1, 1.0), (2, 3, 1.0)]);
        let t = minimum_spanning_tree(&g);
        assert_eq!(t.edges.len(), 2);
        assert_eq!(t.components(), vec![0, 0, 1, 1]);
    }

    #[test]
    fn path_cut() {
        let tree = SpanningTree {
            node_ids: vec![0, 1, 2],
            edges: vec![Edge { u: 0, v: 1, weight: 0.1 }, Edge { u: 1, v: 2, weight: 0.9 }],
        };
        assert_eq!(cut_edges_at(&tree, 0.5).components(), vec![0, 0, 1]);
        assert_eq!(cut_edges_at(&tree, 1.0), tree);
        assert!(cut_edges_at(&tree, 0.05).edges.is_empty());
    }

    #[test]
    fn cut_through_fit_threshold() {
        let tree = SpanningTree {
            node_ids: vec![0, 1, 2],
            edges: vec![Edge { u: 0, v: 1, weight: 0.1 }, Edge { u: 1, v: 2, weight: 0.9 }],
        };
        let fit = GmmFit {
            weights: [0.5, 0.5],
            means: [0.8, 0.2],
            stddevs: [0.1, 0.1],
            log_likelihood: 0.0,
            iterations: 0,
            converged: true,
            log_likelihood_history: vec![],
        };
        // 0.8 - 3 * 0.1 = 0.5
        assert_eq!(cut_edges(&tree, &fit, 3.0).components(), vec![0, 0, 1]);
    }

    #[test]
    fn merge_rejects_small_components() {
        let (forest, reg) = forest_with_sizes(&[50, 48, 1, 1, 2]);
        let mask = merge_components(&forest, &reg, 5).unwrap();
        let sizes: Vec<usize> = mask.objects.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![50, 48]);
        assert_eq!(mask.rejected.len(), 4);
    }

    #[test]
    fn merge_single_component_and_singletons() {
        let (forest, reg) = forest_with_sizes(&[4]);
        assert_eq!(merge_components(&forest, &reg, 10).unwrap().objects.len(), 1);
        let (forest, reg) = forest_with_sizes(&[1, 1, 1]);
        let mask = merge_components(&forest, &reg, 1).unwrap();
        assert!(mask.objects.is_empty());
        assert_eq!(mask.rejected, vec![0, 1, 2]);
    }

    #[test]
    fn size_cutoff_uses_median_and_mad() {
        // median 2, MAD 1 -> max(5, -1)
        assert_eq!(size_cutoff(&[50, 48, 1, 1, 2], 5), 5.0);
        // median 30, MAD 0 -> 30
        assert_eq!(size_cutoff(&[30, 30, 30, 2], 3), 30.0);
    }

    #[test]
    fn region_labels_round_trip() {
        let mask = UnknownMask { objects: vec![vec![3, 7], vec![5]], rejected: vec![1] };
        let members = [1, 3, 5, 7];
        let labels = mask.region_labels(&members);
        assert_eq!(labels, vec![-1, 0, 1, 0]);
        assert_eq!(UnknownMask::from_region_labels(&members, &labels).unwrap(), mask);
    }

    fn scores(v: Vec<f64>) -> ScoreField<f64> {
        ScoreField { scores: v, polarity: Polarity::LowMeansUnknown, method: ScoreMethod::External }
    }

    #[test]
    fn two_node_region_single_edge() {
        let cloud = PointProbabilityCloud::new(
            array![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [5.0, 0.0, 0.0]],
            Array2::zeros((3, 2)),
            None,
            None,
        )
        .unwrap();
        let g = build_region_graph(&cloud, &region(vec![0, 2]), &scores(vec![0.1, 0.5, 0.1]), 16, SimDMode::Inverted, Symmetrize::Min)
            .unwrap();
        assert_eq!(g.edges.len(), 1);
        assert_eq!((g.edges[0].u, g.edges[0].v), (0, 1));
        // Single neighbor per row: Sim_D = 1 - 1 = 0, Sim_U = 1.
        assert_eq!(g.edges[0].weight, 1.0);
        assert!(matches!(
            build_region_graph(&cloud, &region(vec![1]), &scores(vec![0.1; 3]), 4, SimDMode::Inverted, Symmetrize::Min),
            Err(Error::RegionTooSmall { size: 1 })
        ));
    }

    #[test]
    fn collinear_equidistant_equal_weights() {
        let cloud = PointProbabilityCloud::new(
            array![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            Array2::zeros((3, 2)),
            None,
            None,
        )
        .unwrap();
        let g = build_region_graph(&cloud, &region(vec![0, 1, 2]), &scores(vec![0.3; 3]), 2, SimDMode::Inverted, Symmetrize::Min)
            .unwrap();
        assert_eq!(g.edges.len(), 3);
        // Every pair has one endpoint for which it is the farthest neighbor,
        // so min-symmetrized weights are all exactly 1.
        assert!(g.edges.iter().all(|e| e.weight == 1.0), "{:?}", g.edges);
    }
}
