//! Synthetic scenes: ball-shaped clusters of points with class logits that
//! are peaked for known classes and flat for unknown ones.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::pointset::{PointProbabilityCloud, UNKNOWN_LABEL};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub center: [f64; 3],
    pub radius: f64,
    pub point_count: usize,
    /// Class id in `[0, C)`, or `-1` for an unknown cluster.
    pub class_id: i32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogitModel {
    /// Logit added to the true class of known points.
    pub known_peak: f64,
    /// Factor applied to the noise logits of unknown points. Values above 1
    /// spread their confidence over a wider band than the known points.
    pub unknown_flatness: f64,
    pub noise_sigma: f64,
}

impl Default for LogitModel {
    fn default() -> Self {
        Self {
            known_peak: 6.0,
            unknown_flatness: 4.0,
            noise_sigma: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub rng_seed: u64,
    pub n_classes: usize,
    pub known_clusters: Vec<ClusterSpec>,
    pub unknown_clusters: Vec<ClusterSpec>,
    pub logit_model: LogitModel,
}

impl Default for SceneSpec {
    /// Two known clusters of 400 points and one unknown cluster of 200 points
    /// sitting between them, 13 classes.
    fn default() -> Self {
        Self {
            rng_seed: 42,
            n_classes: 13,
            known_clusters: vec![
                ClusterSpec { center: [0.0, 0.0, 0.0], radius: 1.0, point_count: 400, class_id: 0 },
                ClusterSpec { center: [4.0, 0.0, 0.0], radius: 1.0, point_count: 400, class_id: 1 },
            ],
            unknown_clusters: vec![ClusterSpec {
                center: [2.0, 1.8, 0.0],
                radius: 0.7,
                point_count: 200,
                class_id: UNKNOWN_LABEL,
            }],
            logit_model: LogitModel::default(),
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::InvalidSpec("n_classes must be at least 2".into()));
        }
        if self.known_clusters.is_empty() && self.unknown_clusters.is_empty() {
            return Err(Error::InvalidSpec("scene has no clusters".into()));
        }
        for c in self.known_clusters.iter().chain(&self.unknown_clusters) {
            if c.point_count == 0 {
                return Err(Error::InvalidSpec("cluster point_count must be at least 1".into()));
            }
            if !(c.radius >= 0.0 && c.radius.is_finite()) || c.center.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSpec("cluster center and radius must be finite, radius >= 0".into()));
            }
        }
        for c in &self.known_clusters {
            if c.class_id < 0 || c.class_id as usize >= self.n_classes {
                return Err(Error::InvalidSpec(format!(
                    "known cluster class {} outside [0, {})",
                    c.class_id, self.n_classes
                )));
            }
        }
        if let Some(c) = self.unknown_clusters.iter().find(|c| c.class_id != UNKNOWN_LABEL) {
            return Err(Error::InvalidSpec(format!("unknown cluster has class {}, expected -1", c.class_id)));
        }
        let m = self.logit_model;
        if !(m.noise_sigma >= 0.0 && m.known_peak.is_finite() && m.unknown_flatness.is_finite()) {
            return Err(Error::InvalidSpec("logit model values must be finite, noise_sigma >= 0".into()));
        }
        Ok(())
    }
}

/// Point uniformly distributed in a ball.
fn sample_in_ball(rng: &mut ChaCha8Rng, center: &[f64; 3], radius: f64) -> [f64; 3] {
    let dir: [f64; 3] = [
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    ];
    let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt().max(f64::MIN_POSITIVE);
    let u: f64 = Uniform::new(0.0, 1.0).unwrap().sample(rng);
    let r = radius * u.cbrt();
    [
        center[0] + r * dir[0] / norm,
        center[1] + r * dir[1] / norm,
        center[2] + r * dir[2] / norm,
    ]
}

/// Generates the cloud (labels set to cluster class ids) and the ground-truth
/// unknown mask. Known clusters come first, then unknown clusters.
pub fn generate_scene<R: Real>(spec: &SceneSpec) -> Result<(PointProbabilityCloud<R>, Vec<bool>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let c = spec.n_classes;
    let noise = Normal::new(0.0, spec.logit_model.noise_sigma).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let total: usize = spec.known_clusters.iter().chain(&spec.unknown_clusters).map(|k| k.point_count).sum();
    let mut coords = Array2::zeros((total, 3));
    let mut logits = Array2::zeros((total, c));
    let mut labels = Vec::with_capacity(total);
    let mut unknown = Vec::with_capacity(total);
    let mut row = 0;
    for cluster in spec.known_clusters.iter().chain(&spec.unknown_clusters) {
        let is_unknown = cluster.class_id == UNKNOWN_LABEL;
        for _ in 0..cluster.point_count {
            let p = sample_in_ball(&mut rng, &cluster.center, cluster.radius);
            for a in 0..3 {
                coords[[row, a]] = R::lit(p[a]);
            }
            for k in 0..c {
                let mut v = noise.sample(&mut rng);
                if is_unknown {
                    v *= spec.logit_model.unknown_flatness;
                } else if k == cluster.class_id as usize {
                    v += spec.logit_model.known_peak;
                }
                logits[[row, k]] = R::lit(v);
            }
            labels.push(cluster.class_id);
            unknown.push(is_unknown);
            row += 1;
        }
    }
    let cloud = PointProbabilityCloud::new(coords, logits, Some(labels), None)?;
    Ok((cloud, unknown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::msp_scores;

    #[test]
    fn noiseless_known_points_are_confident() {
        let spec = SceneSpec {
            logit_model: LogitModel { known_peak: 10.0, unknown_flatness: 0.0, noise_sigma: 0.0 },
            ..SceneSpec::default()
        };
        let (cloud, mask) = generate_scene::<f64>(&spec).unwrap();
        let msp = msp_scores(cloud.logits()).unwrap();
        for (s, u) in msp.scores.iter().zip(&mask) {
            if *u {
                assert!((s - 1.0 / 13.0).abs() < 1e-15);
            } else {
                // e^10 / (e^10 + 12)
                assert!(*s > 0.99);
            }
        }
    }

    #[test]
    fn deterministic_and_mask_counts() {
        let spec = SceneSpec::default();
        let (a, ma) = generate_scene::<f64>(&spec).unwrap();
        let (b, mb) = generate_scene::<f64>(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
        assert_eq!(ma.iter().filter(|&&u| u).count(), 200);
        assert_eq!(a.n_points(), 1000);
        assert!(a.labels().unwrap().iter().zip(&ma).all(|(&l, &u)| (l == -1) == u));
    }

    #[test]
    fn points_stay_inside_their_ball() {
        let spec = SceneSpec::default();
        let (cloud, _) = generate_scene::<f64>(&spec).unwrap();
        let first = &spec.known_clusters[0];
        for i in 0..first.point_count {
            let p = cloud.point(i);
            let d2: f64 = (0..3).map(|a| (p[a] - first.center[a]).powi(2)).sum();
            assert!(d2 <= first.radius * first.radius + 1e-12);
        }
    }

    #[test]
    fn default_scene_separates_unknown_scores() {
        for seed in [42, 1, 2, 3] {
            let spec = SceneSpec { rng_seed: seed, ..SceneSpec::default() };
            let (cloud, mask) = generate_scene::<f64>(&spec).unwrap();
            let msp = msp_scores(cloud.logits()).unwrap();
            let unknown_score: Vec<f64> = msp.scores.iter().map(|s| 1.0 - s).collect();
            let a = crate::metrics::auroc(&unknown_score, &mask).unwrap();
            assert!(a > 0.95, "seed {seed}: {a}");
        }
    }

    #[test]
    fn invalid_specs() {
        let mut spec = SceneSpec::default();
        spec.known_clusters[0].class_id = 13;
        assert!(matches!(generate_scene::<f64>(&spec), Err(Error::InvalidSpec(_))));
        let mut spec = SceneSpec::default();
        spec.unknown_clusters[0].point_count = 0;
        assert!(generate_scene::<f64>(&spec).is_err());
    }
}
