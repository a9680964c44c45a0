use approx::assert_abs_diff_eq;
use ndarray::{Array1, Array2};
use proptest::prelude::*;

use das_core::data::{parse_csv, split_one_class, Dataset, StandardizationParams};
use das_core::detectors::{DetectorHyperparams, DetectorKind, FittedDetector};
use das_core::enhance::{fuse, min_max_normalize};
use das_core::prompt::{parse_policy_spec, serialize_policy_spec, PolicySpecDoc};
use das_core::stats::{auc_pr, auc_roc};
use das_core::synthesis::{DirectionStrategy, MinDistance, SynthesisPolicy};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-1e3f64..1e3, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn labeled(rows: usize, cols: usize) -> impl Strategy<Value = Dataset> {
    (matrix(rows, cols), prop::collection::vec(0u8..=1, rows)).prop_map(|(x, mut y)| {
        // one of each class so splits are valid
        y[0] = 0;
        y[1] = 0;
        y[2] = 1;
        Dataset::new(x, Some(y)).unwrap()
    })
}

fn rotation(d: usize, angles: &[f64]) -> Array2<f64> {
    let mut q = Array2::<f64>::eye(d);
    for (k, &a) in angles.iter().enumerate() {
        let (i, j) = (k % d, (k + 1) % d);
        if i == j {
            continue;
        }
        let mut g = Array2::<f64>::eye(d);
        g[[i, i]] = a.cos();
        g[[j, j]] = a.cos();
        g[[i, j]] = -a.sin();
        g[[j, i]] = a.sin();
        q = q.dot(&g);
    }
    q
}

fn policy_strategy() -> impl Strategy<Value = (DetectorKind, SynthesisPolicy)> {
    (
        (0usize..4, 0.5f64..99.5, 0.01f64..5.0, 1.01f64..4.0, 1usize..60),
        (0.0f64..0.5, 0.5f64..1.0, prop::bool::ANY, 0.0f64..3.0),
        (0usize..5, 0.0f64..1.0, 1usize..30, any::<u64>()),
    )
        .prop_map(|((k, pct, step, growth, steps), (lo, hi, nn, dist), (dir, swap, budget, seed))| {
            let kind = DetectorKind::ALL[k];
            let policy = SynthesisPolicy {
                seed_percentile: pct,
                step_init: step,
                step_growth: growth,
                max_steps: steps,
                score_band: (lo, hi),
                min_seed_distance: if nn { MinDistance::NnMultiple(dist) } else { MinDistance::Absolute(dist) },
                direction: DirectionStrategy::ALL[dir],
                swap_fraction: swap,
                draw_budget: budget,
                seed,
            };
            (kind, policy)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_lossless(ds in labeled(12, 3)) {
        let back = parse_csv(&ds.to_csv_string(), Some("label")).unwrap();
        prop_assert_eq!(back.features(), ds.features());
        prop_assert_eq!(back.labels(), ds.labels());
    }

    #[test]
    fn standardized_train_has_zero_mean_unit_std(x in matrix(30, 4)) {
        let params = StandardizationParams::fit(x.view());
        let z = params.transform(x.view()).unwrap();
        for col in z.columns() {
            let m = col.mean().unwrap();
            let s = col.std(0.0);
            prop_assert!(m.abs() < 1e-9);
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn split_partitions_rows(ds in labeled(40, 2), frac in 0.1f64..1.0, seed in any::<u64>()) {
        let s = split_one_class(&ds, frac, seed).unwrap();
        let labels = ds.labels().unwrap();
        let mut all: Vec<usize> = s.train_indices.iter().chain(&s.test_indices).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..ds.n_rows()).collect::<Vec<_>>());
        prop_assert!(s.train_indices.iter().all(|&i| labels[i] == 0));
        let normals = labels.iter().filter(|&&l| l == 0).count();
        prop_assert_eq!(s.train.n_rows(), (frac * normals as f64).floor() as usize);
        prop_assert_eq!(s.test.n_anomalies(), ds.n_anomalies());
        let again = split_one_class(&ds, frac, seed).unwrap();
        prop_assert_eq!(again.train_indices, s.train_indices);
    }

    #[test]
    fn pca_scores_are_rotation_invariant(
        train in matrix(60, 4),
        test in matrix(10, 4),
        angles in prop::collection::vec(0.0f64..std::f64::consts::TAU, 6),
    ) {
        let hp = DetectorHyperparams {
            pca: das_core::detectors::PcaParams { variance_retained: 0.9, standardize: false },
            ..DetectorHyperparams::default()
        };
        let q = rotation(4, &angles);
        let fit = |tr: &Array2<f64>| FittedDetector::fit(DetectorKind::Pca, &Dataset::unlabeled(tr.clone()).unwrap(), &hp).unwrap();
        let a = fit(&train).score_matrix(test.view()).unwrap();
        let b = fit(&train.dot(&q)).score_matrix(test.dot(&q).view()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0), "{} vs {}", x, y);
        }
    }

    #[test]
    fn auc_is_invariant_to_monotone_score_maps(
        scores in prop::collection::vec(-50i32..50, 5..80),
        flips in prop::collection::vec(prop::bool::ANY, 80),
    ) {
        let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
        let mut y: Vec<u8> = s.iter().zip(&flips).map(|(_, &f)| u8::from(f)).collect();
        y[0] = 0;
        y[1] = 1;
        let mapped: Vec<f64> = s.iter().map(|v| (v / 7.0).exp()).collect();
        prop_assert_eq!(auc_roc(&s, &y).unwrap(), auc_roc(&mapped, &y).unwrap());
        prop_assert_eq!(auc_pr(&s, &y).unwrap(), auc_pr(&mapped, &y).unwrap());
    }

    #[test]
    fn fusion_preserves_joint_dominance(
        base in prop::collection::vec(-10.0f64..10.0, 2..50),
        clf_seed in prop::collection::vec(0.0f64..1.0, 50),
    ) {
        let clf: Vec<f64> = clf_seed[..base.len()].to_vec();
        let f = fuse(&base, &clf, None, None);
        for i in 0..base.len() {
            prop_assert!((0.0..=2.0).contains(&f[i]));
            for j in 0..base.len() {
                if base[i] > base[j] && clf[i] > clf[j] {
                    prop_assert!(f[i] > f[j]);
                }
            }
        }
    }

    #[test]
    fn normalization_clips_to_explicit_anchors(v in prop::collection::vec(-100.0f64..100.0, 1..30)) {
        let n = min_max_normalize(&v, Some((-10.0, 10.0)));
        for (x, y) in v.iter().zip(&n) {
            prop_assert!((0.0..=1.0).contains(y));
            if (-10.0..=10.0).contains(x) {
                assert_abs_diff_eq!(*y, (x + 10.0) / 20.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn policy_documents_round_trip((kind, policy) in policy_strategy(), text in "[a-z ,.]{0,40}") {
        let doc = PolicySpecDoc {
            detector_kind: kind,
            policy_text: text.clone(),
            explanation_text: format!("why: {text}"),
            parameters: Default::default(),
        };
        let written = serialize_policy_spec(&doc, &policy);
        let (doc2, policy2) = parse_policy_spec(&written).unwrap();
        prop_assert_eq!(&policy2, &policy);
        prop_assert_eq!(doc2.detector_kind, kind);
        prop_assert_eq!(&doc2.policy_text, &doc.policy_text);
        prop_assert_eq!(serialize_policy_spec(&doc2, &policy2), written);
    }
}

#[test]
fn standardizer_applies_train_statistics_to_test_rows() {
    let train = ndarray::array![[0.0, 10.0], [2.0, 10.0], [4.0, 10.0]];
    let params = StandardizationParams::fit(train.view());
    let z = params.transform_row(Array1::from(vec![6.0, 10.0]).view());
    let sd = (8.0f64 / 3.0).sqrt();
    assert_abs_diff_eq!(z[0], 4.0 / sd, epsilon = 1e-12);
    // constant features map to zero
    assert_eq!(z[1], 0.0);
}
