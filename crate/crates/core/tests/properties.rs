use std::collections::BTreeSet;

use ndarray::Array2;
use proptest::prelude::*;

use owpl::distillation::soften;
use owpl::gbd::{cut_edges_at, detect_unknown_objects, minimum_spanning_tree, GbdConfig, WeightedNeighborGraph};
use owpl::hua::{grow_region, HuaConfig};
use owpl::losses::closed_set_loss;
use owpl::metrics::{aupr, auroc};
use owpl::pointset::{decode_csv, decode_owpc, encode_csv, encode_owpc, PointProbabilityCloud};
use owpl::pseudo_labeling::make_pseudo_gt;
use owpl::synth::{generate_scene, ClusterSpec, SceneSpec};
use owpl::uncertainty::msp_scores;
use owpl::Cloud;

fn matrix(rows: usize, cols: usize, range: std::ops::Range<f64>) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(range, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn logits_strategy() -> impl Strategy<Value = Array2<f64>> {
    (1usize..20, 2usize..8).prop_flat_map(|(n, c)| matrix(n, c, -20.0..20.0))
}

fn cloud_strategy() -> impl Strategy<Value = Cloud> {
    (1usize..30, 2usize..6, 0usize..3, any::<bool>())
        .prop_flat_map(|(n, c, f, labeled)| {
            let single = any::<f32>().prop_filter("finite", |v| v.is_finite()).prop_map(f64::from);
            (
                prop::collection::vec(single.clone(), n * 3),
                prop::collection::vec(single.clone(), n * c),
                prop::collection::vec(-1i32..(c as i32 + 2), n),
                prop::collection::vec(single, n * f),
                Just((n, c, f, labeled)),
            )
        })
        .prop_map(|(coords, logits, labels, features, (n, c, f, labeled))| {
            PointProbabilityCloud::new(
                Array2::from_shape_vec((n, 3), coords).unwrap(),
                Array2::from_shape_vec((n, c), logits).unwrap(),
                labeled.then_some(labels),
                (f > 0).then(|| Array2::from_shape_vec((n, f), features).unwrap()),
            )
            .unwrap()
        })
}

/// Small scene with one planted unknown cluster next to two known ones.
fn small_scene(seed: u64) -> SceneSpec {
    SceneSpec {
        rng_seed: seed,
        n_classes: 5,
        known_clusters: vec![
            ClusterSpec { center: [0.0, 0.0, 0.0], radius: 1.0, point_count: 120, class_id: 0 },
            ClusterSpec { center: [4.0, 0.0, 0.0], radius: 1.0, point_count: 120, class_id: 1 },
        ],
        unknown_clusters: vec![ClusterSpec { center: [2.0, 1.8, 0.0], radius: 0.7, point_count: 60, class_id: -1 }],
        ..SceneSpec::default()
    }
}

proptest! {
    #[test]
    fn clouds_survive_both_formats(cloud in cloud_strategy()) {
        let owpc: Cloud = decode_owpc(&encode_owpc(&cloud).unwrap()).unwrap();
        prop_assert_eq!(&owpc, &cloud);
        let csv: Cloud = decode_csv(encode_csv(&cloud).as_bytes()).unwrap();
        prop_assert_eq!(&csv, &cloud);
    }

    #[test]
    fn msp_ignores_row_shifts(logits in logits_strategy(), shift in -50.0f64..50.0) {
        let base = msp_scores(&logits).unwrap();
        let shifted = msp_scores(&(&logits + shift)).unwrap();
        for (a, b) in base.scores.iter().zip(&shifted.scores) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn msp_grows_with_the_top_logit(logits in logits_strategy(), bump in 0.0f64..5.0) {
        let base = msp_scores(&logits).unwrap();
        let mut raised = logits.clone();
        for mut row in raised.rows_mut() {
            let top = (0..row.len()).fold(0, |b, k| if row[k] > row[b] { k } else { b });
            row[top] += bump;
        }
        let after = msp_scores(&raised).unwrap();
        for (a, b) in base.scores.iter().zip(&after.scores) {
            prop_assert!(*b >= *a - 1e-15);
            prop_assert!(*a >= 0.0 && *b <= 1.0);
        }
    }

    #[test]
    fn auroc_ignores_monotone_transforms(
        raw in prop::collection::vec((0i64..400, any::<bool>()), 2..200),
    ) {
        let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64).collect();
        let mut unknown: Vec<bool> = raw.iter().map(|(_, u)| *u).collect();
        unknown[0] = true;
        unknown[1] = false;
        // Exact in double precision for these integers.
        let cubed: Vec<f64> = scores.iter().map(|s| s * s * s + 5.0 * s - 7.0).collect();
        prop_assert_eq!(auroc(&scores, &unknown).unwrap(), auroc(&cubed, &unknown).unwrap());
        let p = aupr(&scores, &unknown).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn negated_scores_complement_auroc(
        raw in prop::collection::btree_set(0i64..100_000, 2..150),
        flags in prop::collection::vec(any::<bool>(), 150),
    ) {
        let scores: Vec<f64> = raw.iter().map(|&s| s as f64 / 7.0).collect();
        let mut unknown: Vec<bool> = flags[..scores.len()].to_vec();
        unknown[0] = true;
        unknown[1] = false;
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        let sum = auroc(&scores, &unknown).unwrap() + auroc(&negated, &unknown).unwrap();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_gradient_rows_sum_to_zero(logits in logits_strategy(), seed in any::<u64>(), shift in -10.0f64..10.0) {
        let c = logits.ncols() as u64;
        let labels: Vec<i32> = (0..logits.nrows() as u64).map(|i| ((seed ^ (i * 0x9e37)) % c) as i32).collect();
        let (loss, grad) = closed_set_loss(&logits, &labels).unwrap();
        for row in grad.rows() {
            prop_assert!(row.sum().abs() < 1e-12);
        }
        let (shifted, _) = closed_set_loss(&(&logits + shift), &labels).unwrap();
        prop_assert!((loss - shifted).abs() < 1e-9 * loss.abs().max(1.0));
        prop_assert!(loss >= 0.0);
    }

    #[test]
    fn softened_rows_are_distributions(logits in logits_strategy(), t in 0.05f64..1e3) {
        for row in logits.rows() {
            let p = soften(row, t).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn cutting_at_a_lower_threshold_never_merges(
        edges in prop::collection::vec((0usize..12, 0usize..12, 0u8..16), 1..40),
        t_hi in 0u8..16,
        drop in 0u8..16,
    ) {
        let edges: Vec<(usize, usize, f64)> = edges.into_iter().filter(|(u, v, _)| u != v).map(|(u, v, w)| (u.min(v), u.max(v), w as f64)).collect();
        let graph = WeightedNeighborGraph::from_edges((0..12).collect(), edges);
        let tree = minimum_spanning_tree(&graph);
        let count = |t: f64| {
            let comps = cut_edges_at(&tree, t).components();
            comps.into_iter().collect::<BTreeSet<_>>().len()
        };
        let hi = t_hi as f64;
        let lo = hi - drop as f64;
        prop_assert!(count(lo) >= count(hi));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn region_growing_is_deterministic_and_nested(seed in 0u64..1000, rng_seed in any::<u64>()) {
        let (cloud, _) = generate_scene::<f64>(&small_scene(seed)).unwrap();
        let scores = msp_scores(cloud.logits()).unwrap();
        let cfg = |lambda| HuaConfig { m: 5, p: 0.05, lambda, k: 8, rng_seed, ..HuaConfig::s3dis() };
        let loose = grow_region(&cloud, &scores, &cfg(0.5)).unwrap();
        prop_assert_eq!(&loose, &grow_region(&cloud, &scores, &cfg(0.5)).unwrap());
        let mid = grow_region(&cloud, &scores, &cfg(1.0)).unwrap();
        let tight = grow_region(&cloud, &scores, &cfg(2.0)).unwrap();
        prop_assert!(mid.members.iter().all(|i| loose.contains(*i)));
        prop_assert!(tight.members.iter().all(|i| mid.contains(*i)));
        for r in [&loose, &mid, &tight] {
            prop_assert!(r.seeds.iter().all(|s| r.contains(*s)));
        }
    }

    #[test]
    fn mask_partitions_the_region(seed in 0u64..1000, epsilon in 0.5f64..5.0) {
        let (cloud, _) = generate_scene::<f64>(&small_scene(seed)).unwrap();
        let scores = msp_scores(cloud.logits()).unwrap();
        let hua = HuaConfig { m: 5, p: 0.05, k: 8, ..HuaConfig::s3dis() };
        let region = grow_region(&cloud, &scores, &hua).unwrap();
        prop_assume!(region.len() > 1);
        let gbd = GbdConfig { k: 8, epsilon, ..GbdConfig::default() };
        let out = detect_unknown_objects(&cloud, &region, &scores, &gbd).unwrap();
        let mut all: Vec<usize> = out.mask.objects.iter().flatten().chain(&out.mask.rejected).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(&all, &region.members);

        let closed: Vec<i32> = cloud.labels().unwrap().to_vec();
        let pseudo = make_pseudo_gt::<f64>(&closed, &out.mask, 5).unwrap().into_hard().unwrap();
        let marked: Vec<usize> = (0..pseudo.len()).filter(|&i| pseudo[i] == 5).collect();
        prop_assert_eq!(marked, out.mask.unknown_points());
    }
}
