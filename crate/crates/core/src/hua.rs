//! Seeded region growing over low-confidence points.
//!
//! Seeds are drawn from the lowest-scoring fraction of the cloud. Each
//! iteration looks up the k nearest non-member points of every member, scores
//! every (member, neighbor) pair with a distance term plus a score-gap term,
//! and admits the neighbors whose similarity reaches the upper half of that
//! matrix. Growth continues while the region mean stays below
//! `mean(all) - lambda * std(all)`.

use std::fmt;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pointset::PointProbabilityCloud;
use crate::scalar::{mean, mean_and_population_std, Real};
use crate::spatial_index::{NeighborList, SpatialIndex};
use crate::uncertainty::{Polarity, ScoreField};

/// How the squared-distance ratio enters the similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimDMode {
    /// `d² / max d²`, which grows with distance.
    Literal,
    /// `1 - d² / max d²`, which is largest for the nearest neighbor.
    #[default]
    Inverted,
}

impl SimDMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SimDMode::Literal => "literal_eq6",
            SimDMode::Inverted => "inverted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "literal_eq6" | "literal" => Some(SimDMode::Literal),
            "inverted" => Some(SimDMode::Inverted),
            _ => None,
        }
    }
}

impl fmt::Display for SimDMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HuaConfig {
    /// Number of seeds.
    pub m: usize,
    /// Fraction of the lowest-scoring points forming the seed pool.
    pub p: f64,
    /// Stop-condition strictness.
    pub lambda: f64,
    pub k: usize,
    pub max_iterations: usize,
    pub sim_d_mode: SimDMode,
    pub rng_seed: u64,
}

impl Default for HuaConfig {
    fn default() -> Self {
        Self::s3dis()
    }
}

impl HuaConfig {
    pub fn s3dis() -> Self {
        Self {
            m: 20,
            p: 0.02,
            lambda: 1.0,
            k: 16,
            max_iterations: 64,
            sim_d_mode: SimDMode::Inverted,
            rng_seed: 0,
        }
    }

    pub fn scannet() -> Self {
        Self {
            m: 200,
            p: 0.15,
            lambda: 2.0,
            ..Self::s3dis()
        }
    }

    /// `ceil(p * n)`, clamped to `n`.
    pub fn pool_size(&self, n: usize) -> usize {
        let raw = (self.p * n as f64 - 1e-9).ceil();
        (raw.max(0.0) as usize).min(n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidHuaConfig("m must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidHuaConfig(format!("p = {} outside [0, 1]", self.p)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidHuaConfig(format!("lambda = {} must be >= 0", self.lambda)));
        }
        if self.k == 0 {
            return Err(Error::InvalidHuaConfig("k must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidHuaConfig("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    StopCondition,
    Exhausted,
    MaxIterations,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::StopCondition => "stop_condition",
            StopReason::Exhausted => "exhausted",
            StopReason::MaxIterations => "max_iterations",
        }
    }
}

/// Result of region growing.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionState<R> {
    /// Sorted member indices.
    pub members: Vec<usize>,
    /// Sorted seed indices.
    pub seeds: Vec<usize>,
    /// Accepted growth steps.
    pub iteration: usize,
    /// Region mean score after the seeds and after every accepted step.
    pub mean_score_history: Vec<R>,
    pub stopped_reason: StopReason,
    pub global_mean: R,
    pub global_std: R,
    /// `global_mean - lambda * global_std`.
    pub threshold: R,
}

impl<R: Real> RegionState<R> {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Whether the final region mean is strictly below the threshold.
    pub fn satisfies_stop_condition(&self) -> bool {
        self.mean_score_history.last().is_some_and(|&m| m < self.threshold)
    }

    pub fn contains(&self, index: usize) -> bool {
        self.members.binary_search(&index).is_ok()
    }
}

/// Lowest-`ceil(p·N)` score pool, then `m` distinct seeds sampled uniformly.
/// Returned sorted.
pub fn select_seeds<R: Real>(scores: &ScoreField<R>, config: &HuaConfig) -> Result<Vec<usize>> {
    scores.require(Polarity::LowMeansUnknown)?;
    config.validate()?;
    let n = scores.len();
    let pool = config.pool_size(n);
    if pool < config.m {
        return Err(Error::PoolSmallerThanM { pool, m: config.m });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores.scores[a]
            .partial_cmp(&scores.scores[b])
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let picks = rand::seq::index::sample(&mut rng, pool, config.m);
    let mut seeds: Vec<usize> = picks.into_iter().map(|j| order[j]).collect();
    seeds.sort_unstable();
    Ok(seeds)
}

/// One similarity row: distance term plus `exp(-|score gap|)`.
pub(crate) fn similarity_row<R: Real>(
    origin_score: R,
    neighbor_scores: impl Iterator<Item = R>,
    sq_distances: &[R],
    mode: SimDMode,
) -> Vec<R> {
    let row_max = sq_distances.iter().copied().fold(R::zero(), R::max);
    neighbor_scores
        .zip(sq_distances)
        .map(|(s, &d2)| {
            let sim_d = if row_max > R::zero() {
                let ratio = d2 / row_max;
                match mode {
                    SimDMode::Literal => ratio,
                    SimDMode::Inverted => R::one() - ratio,
                }
            } else {
                R::one()
            };
            sim_d + (-(origin_score - s).abs()).exp()
        })
        .collect()
}

/// Similarity matrix between each point in `points` and its neighbor row.
pub fn similarity<R: Real>(
    points: &[usize],
    neighbors: &NeighborList<R>,
    scores: &ScoreField<R>,
    mode: SimDMode,
) -> Result<Array2<R>> {
    similarity_matrix(points, neighbors, &scores.scores, mode)
}

pub(crate) fn similarity_matrix<R: Real>(
    points: &[usize],
    neighbors: &NeighborList<R>,
    scores: &[R],
    mode: SimDMode,
) -> Result<Array2<R>> {
    if neighbors.query_count() != points.len() && neighbors.k() > 0 {
        return Err(Error::ShapeMismatch(format!(
            "{} neighbor rows for {} points",
            neighbors.query_count(),
            points.len()
        )));
    }
    let k = neighbors.k();
    let rows: Vec<Vec<R>> = (0..points.len())
        .into_par_iter()
        .map(|row| {
            let origin = scores[points[row]];
            similarity_row(
                origin,
                neighbors.indices(row).iter().map(|&j| scores[j]),
                neighbors.sq_distances(row),
                mode,
            )
        })
        .collect();
    let flat: Vec<R> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((points.len(), k), flat).expect("similarity shape"))
}

/// Cutoff such that the entries at or above it form the upper half (by count,
/// rounded up) of `values`.
fn upper_half_cutoff<R: Real>(values: &[R]) -> R {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite similarity"));
    sorted[values.len().div_ceil(2) - 1]
}

pub fn grow_region<R: Real>(
    cloud: &PointProbabilityCloud<R>,
    scores: &ScoreField<R>,
    config: &HuaConfig,
) -> Result<RegionState<R>> {
    let index = SpatialIndex::build(cloud.coords())?;
    grow_region_with_index(&index, scores, config)
}

pub fn grow_region_with_index<R: Real>(
    index: &SpatialIndex<R>,
    scores: &ScoreField<R>,
    config: &HuaConfig,
) -> Result<RegionState<R>> {
    scores.require(Polarity::LowMeansUnknown)?;
    let n = index.len();
    if scores.len() != n {
        return Err(Error::ShapeMismatch(format!("{} scores for {n} points", scores.len())));
    }
    let seeds = select_seeds(scores, config)?;
    let s = &scores.scores;
    let (global_mean, global_std) = mean_and_population_std(s).expect("non-empty");
    let threshold = global_mean - R::lit(config.lambda) * global_std;

    let mut in_region = vec![false; n];
    for &i in &seeds {
        in_region[i] = true;
    }
    let mut members = seeds.clone();
    let seed_mean = mean(members.iter().map(|&i| s[i])).unwrap();
    let mut history = vec![seed_mean];
    let state = |members: Vec<usize>, iteration, history, reason| RegionState {
        members,
        seeds: seeds.clone(),
        iteration,
        mean_score_history: history,
        stopped_reason: reason,
        global_mean,
        global_std,
        threshold,
    };
    if seed_mean >= threshold {
        return Ok(state(members, 0, history, StopReason::StopCondition));
    }

    let mut iteration = 0;
    loop {
        if iteration == config.max_iterations {
            return Ok(state(members, iteration, history, StopReason::MaxIterations));
        }
        let available = n - members.len();
        if available == 0 {
            return Ok(state(members, iteration, history, StopReason::Exhausted));
        }
        let k = config.k.min(available);
        let neighbors = index.knn(&members, k, Some(&in_region))?;
        let sim = similarity_matrix(&members, &neighbors, s, config.sim_d_mode)?;
        let flat = sim.as_slice().expect("contiguous");
        let cutoff = upper_half_cutoff(flat);
        let mut admitted: Vec<usize> = neighbors
            .all_indices()
            .iter()
            .zip(flat)
            .filter(|(_, &v)| v >= cutoff)
            .map(|(&j, _)| j)
            .collect();
        admitted.sort_unstable();
        admitted.dedup();

        let mut grown = members.clone();
        grown.extend_from_slice(&admitted);
        grown.sort_unstable();
        let grown_mean = mean(grown.iter().map(|&i| s[i])).unwrap();
        if grown_mean >= threshold {
            // Roll back the violating batch.
            return Ok(state(members, iteration, history, StopReason::StopCondition));
        }
        for &j in &admitted {
            in_region[j] = true;
        }
        members = grown;
        history.push(grown_mean);
        iteration += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial_index::SpatialIndex;
    use crate::uncertainty::ScoreMethod;
    use ndarray::array;

    fn low(scores: Vec<f64>) -> ScoreField<f64> {
        ScoreField {
            scores,
            polarity: Polarity::LowMeansUnknown,
            method: ScoreMethod::External,
        }
    }

    #[test]
    fn seeds_fill_pool_of_size_m() {
        let scores = low(vec![0.9, 0.1, 0.8, 0.7, 0.05, 0.6, 0.5, 0.4, 0.3, 0.2]);
        let cfg = HuaConfig { m: 2, p: 0.2, ..HuaConfig::default() };
        assert_eq!(select_seeds(&scores, &cfg).unwrap(), vec![1, 4]);
    }

    #[test]
    fn seeds_deterministic_under_ties() {
        let scores = low(vec![0.5; 10]);
        let cfg = HuaConfig { m: 3, p: 0.5, rng_seed: 11, ..HuaConfig::default() };
        let a = select_seeds(&scores, &cfg).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a, select_seeds(&scores, &cfg).unwrap());
        // With ties the pool is the lowest indices.
        assert!(a.iter().all(|&i| i < 5));
    }

    #[test]
    fn pool_too_small() {
        let scores = low(vec![0.5; 10]);
        let cfg = HuaConfig { m: 3, p: 0.2, ..HuaConfig::default() };
        assert!(matches!(
            select_seeds(&scores, &cfg),
            Err(Error::PoolSmallerThanM { pool: 2, m: 3 })
        ));
    }

    #[test]
    fn wrong_polarity_rejected() {
        let mut scores = low(vec![0.5; 10]);
        scores.polarity = Polarity::HighMeansUnknown;
        assert!(matches!(
            select_seeds(&scores, &HuaConfig { m: 1, p: 0.5, ..HuaConfig::default() }),
            Err(Error::PolarityMismatch { .. })
        ));
    }

    #[test]
    fn coincident_neighbor_is_maximal() {
        let idx = SpatialIndex::build(&array![[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        let nl = idx.knn_excluding_self(&[0], 1, None).unwrap();
        let sim = similarity(&[0], &nl, &low(vec![0.3, 0.3]), SimDMode::Inverted).unwrap();
        assert_eq!(sim[[0, 0]], 2.0);
    }

    #[test]
    fn literal_mode_row_max_is_one() {
        let idx = SpatialIndex::build(&array![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0]]).unwrap();
        let nl = idx.knn_excluding_self(&[0], 2, None).unwrap();
        let scores = low(vec![0.2, 0.2, 0.2]);
        let lit = similarity(&[0], &nl, &scores, SimDMode::Literal).unwrap();
        assert_eq!(lit[[0, 1]], 2.0);
        assert!((lit[[0, 0]] - (1.0 / 9.0 + 1.0)).abs() < 1e-15);
        let inv = similarity(&[0], &nl, &scores, SimDMode::Inverted).unwrap();
        assert_eq!(inv[[0, 1]], 1.0);
    }

    #[test]
    fn upper_half_cutoff_counts() {
        assert_eq!(upper_half_cutoff(&[1.0, 4.0, 2.0, 3.0]), 3.0);
        assert_eq!(upper_half_cutoff(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(upper_half_cutoff(&[5.0]), 5.0);
    }

    fn line_cloud(n: usize) -> PointProbabilityCloud<f64> {
        let coords = Array2::from_shape_fn((n, 3), |(i, j)| if j == 0 { i as f64 } else { 0.0 });
        PointProbabilityCloud::new(coords, Array2::zeros((n, 2)), None, None).unwrap()
    }

    #[test]
    fn constant_scores_stop_at_seeds() {
        let cloud = line_cloud(20);
        let scores = low(vec![0.4; 20]);
        let cfg = HuaConfig { m: 2, p: 0.5, ..HuaConfig::default() };
        let region = grow_region(&cloud, &scores, &cfg).unwrap();
        assert_eq!(region.members, region.seeds);
        assert_eq!(region.stopped_reason, StopReason::StopCondition);
        assert_eq!(region.iteration, 0);
    }

    #[test]
    fn max_iterations_caps_growth() {
        let cloud = line_cloud(40);
        let scores = low((0..40).map(|i| if i < 20 { 0.1 } else { 0.9 }).collect());
        let cfg = HuaConfig { m: 1, p: 0.05, k: 2, lambda: 0.5, max_iterations: 1, ..HuaConfig::default() };
        let region = grow_region(&cloud, &scores, &cfg).unwrap();
        assert!(region.iteration <= 1);
        assert_eq!(region.mean_score_history.len(), region.iteration + 1);
        assert!(region.stopped_reason == StopReason::MaxIterations || region.iteration == 0);
    }

    #[test]
    fn never_absorbs_the_whole_cloud() {
        // A region equal to the whole cloud has mean == global mean, which can
        // never be strictly below the threshold, so that batch is rolled back.
        let cloud = line_cloud(6);
        let scores = low(vec![0.1, 0.1, 0.1, 0.1, 0.1, 0.2]);
        let cfg = HuaConfig { m: 1, p: 0.1, lambda: 0.0, ..HuaConfig::default() };
        let region = grow_region(&cloud, &scores, &cfg).unwrap();
        assert!(region.satisfies_stop_condition());
        assert!(!region.contains(5));
        assert_eq!(region.stopped_reason, StopReason::StopCondition);
    }
}
