//! Property tests for the invariants each module promises.

use aodforest::cascade::{fit_cascade, Augmentation, CascadeConfig, LayerCount};
use aodforest::data::{kfold_indices, Dataset, FeatureSchema, MinMaxScaler, Sample};
use aodforest::eval::compute_metrics;
use aodforest::kriging::{OrdinaryKriging, VariogramKind, VariogramModel};
use aodforest::preprocess::{
    compute_uncertainty, correct_pm_humidity, iqr_filter, merge_daily_aod, AdjacencyClass, CloudClass, LinearFit,
    QaFlags, SensorRegression,
};
use aodforest::trees::{fit_forest, fit_tree, DecisionTree, ForestKind, MaxFeatures, Node, TreeConfig};
use ndarray::Array2;
use proptest::prelude::*;

fn matrix(rows: &[Vec<f64>]) -> Array2<f64> {
    let d = rows[0].len();
    Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j])
}

fn rows_strategy(d: usize, n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    n.prop_flat_map(move |n| {
        (
            prop::collection::vec(prop::collection::vec(-50.0f64..50.0, d), n),
            prop::collection::vec(-100.0f64..100.0, n),
        )
    })
}

fn sse(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum()
}

/// Routes the training rows through the tree and checks every split lowers
/// the summed squared error of the targets it receives.
fn check_splits(tree: &DecisionTree, x: &[Vec<f64>], y: &[f64], node: usize, rows: &[usize]) {
    match tree.nodes()[node] {
        Node::Leaf { .. } => {}
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][feature] <= threshold);
            assert!(!l.is_empty() && !r.is_empty(), "split with an empty child");
            let parent = sse(&rows.iter().map(|&i| y[i]).collect::<Vec<_>>());
            let lv: Vec<f64> = l.iter().map(|&i| y[i]).collect();
            let rv: Vec<f64> = r.iter().map(|&i| y[i]).collect();
            let reduction = parent - sse(&lv) - sse(&rv);
            assert!(reduction > 0.0, "split reduction {reduction} not positive");
            check_splits(tree, x, y, left, &l);
            check_splits(tree, x, y, right, &r);
        }
    }
}

fn qa_from(code: u8) -> QaFlags {
    let adjacency = [AdjacencyClass::Normal, AdjacencyClass::Clear, AdjacencyClass::Other][(code % 3) as usize];
    let cloud = [CloudClass::Clear, CloudClass::PossiblyCloudy, CloudClass::Other][(code / 3 % 3) as usize];
    QaFlags { adjacency, cloud }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scaler_round_trip_and_unit_range((rows, y) in rows_strategy(3, 2..40)) {
        let ds = Dataset::from_matrix(FeatureSchema::from_names(&["a", "b", "c"]).unwrap(), &matrix(&rows), &y).unwrap();
        let s = MinMaxScaler::fit(&ds, true).unwrap();
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                let z = s.scale_value(j, v);
                prop_assert!((0.0..=1.0).contains(&z));
                prop_assert!((s.invert_value(j, z) - v).abs() <= 1e-12 * v.abs().max(1.0));
            }
            let t = s.scale_target(y[i]).unwrap();
            prop_assert!((s.invert_target(t).unwrap() - y[i]).abs() <= 1e-12 * y[i].abs().max(1.0));
        }
    }

    #[test]
    fn test_rows_outside_training_bounds_are_not_clipped(v in 60.0f64..1e3) {
        let ds = Dataset::with_rows(
            FeatureSchema::from_names(&["a"]).unwrap(),
            vec![Sample::new(vec![0.0], None), Sample::new(vec![50.0], None)],
        ).unwrap();
        let s = MinMaxScaler::fit(&ds, false).unwrap();
        prop_assert!(s.scale_value(0, v) > 1.0);
        prop_assert!(s.scale_value(0, -v) < 0.0);
    }

    #[test]
    fn folds_partition_indices(n in 2usize..200, k in 2usize..12, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = kfold_indices(n, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut seen = vec![0usize; n];
        let sizes: Vec<usize> = folds.iter().map(|f| f.1.len()).collect();
        for (train, valid) in &folds {
            prop_assert_eq!(train.len() + valid.len(), n);
            for &i in valid {
                seen[i] += 1;
                prop_assert!(!train.contains(&i));
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn humidity_correction_monotone(pm in 0.0f64..500.0, a in 0.0f64..99.9, b in 0.0f64..99.9) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let c_lo = correct_pm_humidity(pm, lo).unwrap();
        let c_hi = correct_pm_humidity(pm, hi).unwrap();
        prop_assert!(c_lo <= c_hi);
        prop_assert!(c_lo >= pm);
        prop_assert_eq!(correct_pm_humidity(pm, 0.0).unwrap(), pm);
    }

    #[test]
    fn iqr_outputs_partition_input(values in prop::collection::vec(-1e3f64..1e3, 0..60)) {
        let split = iqr_filter(&values);
        prop_assert_eq!(split.inliers.len() + split.outliers.len(), values.len());
        let mut all: Vec<f64> = split.inliers.iter().chain(&split.outliers).copied().collect();
        let mut input = values.clone();
        all.sort_by(f64::total_cmp);
        input.sort_by(f64::total_cmp);
        prop_assert_eq!(all, input);
    }

    #[test]
    fn iqr_symmetric_input_gives_symmetric_and_idempotent_output(
        half in prop::collection::vec(0u32..100, 2..20),
        c in -50i32..50,
    ) {
        // integer data keeps the quartile interpolation exact
        let c = c as f64;
        let values: Vec<f64> = half.iter().map(|&h| c + h as f64).chain(half.iter().map(|&h| c - h as f64)).collect();
        let once = iqr_filter(&values);
        let above = once.outliers.iter().filter(|&&v| v > c).count();
        let below = once.outliers.iter().filter(|&&v| v < c).count();
        prop_assert_eq!(above, below);
        let twice = iqr_filter(&once.inliers);
        if let Some((lo, hi)) = twice.bounds {
            if once.inliers.iter().all(|&v| v >= lo && v <= hi) {
                prop_assert!(twice.outliers.is_empty());
                prop_assert_eq!(&twice.inliers, &once.inliers);
            }
        }
        let equal = iqr_filter(&vec![c; values.len()]);
        prop_assert!(equal.outliers.is_empty());
    }

    #[test]
    fn merge_symmetric_when_both_present(a in 0.0f64..2.0, t in 0.0f64..2.0, slope in -2.0f64..2.0, icpt in -1.0f64..1.0) {
        let lf = LinearFit { slope, intercept: icpt, r2: 0.5, n: 10 };
        let fit = SensorRegression { aqua_to_terra: lf, terra_to_aqua: lf };
        prop_assert_eq!(merge_daily_aod(Some(a), Some(t), &fit), merge_daily_aod(Some(t), Some(a), &fit));
    }

    #[test]
    fn uncertainty_takes_ninths(codes in prop::collection::vec(prop::option::of(0u8..9), 9)) {
        let window: [Option<QaFlags>; 9] = std::array::from_fn(|i| codes[i].map(qa_from));
        let u = compute_uncertainty(&window);
        let k = (u * 9.0).round();
        prop_assert!((u - k / 9.0).abs() < 1e-15);
        prop_assert!((0.0..=9.0).contains(&k));
    }

    #[test]
    fn tree_splits_reduce_error_and_predictions_stay_in_range(
        (rows, y) in rows_strategy(3, 2..50),
        leaf in 1usize..4,
        seed in any::<u64>(),
        random in any::<bool>(),
    ) {
        let x = matrix(&rows);
        let mode = if random { aodforest::trees::SplitMode::RandomThreshold } else { aodforest::trees::SplitMode::BestOfSubset };
        let cfg = TreeConfig::default()
            .with_min_samples_leaf(leaf)
            .with_max_features(MaxFeatures::Count(2))
            .with_split_mode(mode)
            .with_seed(seed);
        let tree = fit_tree(&x, &y, &cfg).unwrap();
        let idx: Vec<usize> = (0..y.len()).collect();
        check_splits(&tree, &rows, &y, 0, &idx);
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for r in &rows {
            let p = tree.predict(r).unwrap();
            prop_assert!(p >= lo - 1e-9 && p <= hi + 1e-9);
        }
    }

    #[test]
    fn forest_prediction_is_mean_of_trees((rows, y) in rows_strategy(4, 5..40), seed in any::<u64>(), et in any::<bool>()) {
        let x = matrix(&rows);
        let kind = if et { ForestKind::ExtraTrees } else { ForestKind::RandomForest };
        let f = fit_forest(&x, &y, kind, 7, &TreeConfig::default().with_max_features(MaxFeatures::Sqrt), seed).unwrap();
        let pred = f.predict(&x).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let m = f.trees().iter().map(|t| t.predict(r).unwrap()).sum::<f64>() / 7.0;
            prop_assert!((pred[i] - m).abs() <= 1e-12 * m.abs().max(1.0));
        }
    }

    #[test]
    fn metrics_rmse_dominates_mae_and_r2_is_affine_invariant(
        y in prop::collection::vec(-100.0f64..100.0, 3..50),
        noise in prop::collection::vec(-30.0f64..30.0, 50),
        a in 0.01f64..100.0,
        b in -100.0f64..100.0,
    ) {
        let p: Vec<f64> = y.iter().zip(&noise).map(|(v, e)| 0.5 * v + e).collect();
        let m = compute_metrics(&y, &p).unwrap();
        prop_assert!(m.rmse >= m.mae - 1e-12);
        let q: Vec<f64> = p.iter().map(|v| a * v + b).collect();
        let m2 = compute_metrics(&y, &q).unwrap();
        if let (Some(r1), Some(r2)) = (m.r2, m2.r2) {
            prop_assert!((r1 - r2).abs() < 1e-9);
        }
    }

    #[test]
    fn kriging_weights_sum_to_one_and_variance_nonnegative(
        pts in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0, -5.0f64..5.0), 2..25),
        targets in prop::collection::vec((-2.0f64..12.0, -2.0f64..12.0), 1..10),
        kind in 0usize..3,
        nugget in 0.05f64..0.5,
        range in 0.5f64..20.0,
    ) {
        let kind = [VariogramKind::Spherical, VariogramKind::Exponential, VariogramKind::Gaussian][kind];
        let vg = VariogramModel::new(kind, nugget, 1.0, range).unwrap();
        let ok = match OrdinaryKriging::new(&pts, vg) {
            Ok(ok) => ok,
            // near-coincident points can make the system singular
            Err(_) => return Ok(()),
        };
        for &(x, y) in &targets {
            if let Ok(s) = ok.solve(x, y) {
                prop_assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                prop_assert!(s.variance >= -1e-8);
            }
        }
    }

    #[test]
    fn variogram_non_decreasing(kind in 0usize..3, nugget in 0.0f64..2.0, psill in 0.0f64..5.0, range in 0.1f64..50.0, h in prop::collection::vec(0.0f64..100.0, 2..30)) {
        let kind = [VariogramKind::Spherical, VariogramKind::Exponential, VariogramKind::Gaussian][kind];
        let vg = VariogramModel::new(kind, nugget, psill, range).unwrap();
        let mut h = h;
        h.sort_by(f64::total_cmp);
        prop_assert_eq!(vg.gamma(0.0), 0.0);
        for w in h.windows(2) {
            prop_assert!(vg.gamma(w[0]) <= vg.gamma(w[1]) + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn cascade_width_recursion_and_carried_columns(
        (rows, y) in rows_strategy(3, 12..30),
        layers in 0usize..4,
        n_rf in 0usize..3,
        n_et in 1usize..3,
        in_sample in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let x = matrix(&rows);
        let cfg = CascadeConfig {
            layers: LayerCount::Fixed(layers),
            n_random_forest: n_rf,
            n_extra_trees: n_et,
            trees_per_estimator: 3,
            augmentation: if in_sample { Augmentation::InSample } else { Augmentation::OutOfFold },
            cv_folds: 3,
            seed,
            ..CascadeConfig::default()
        };
        let m = fit_cascade(&x, &y, &cfg).unwrap();
        let widths = m.layer_widths();
        prop_assert_eq!(widths.len(), layers + 1);
        for j in 0..widths.len() {
            prop_assert_eq!(widths[j], 3 + (n_rf + n_et) * j);
        }
        let z = m.transform(&x).unwrap();
        prop_assert_eq!(z.ncols(), *widths.last().unwrap());
        for i in 0..x.nrows() {
            for j in 0..3 {
                prop_assert_eq!(z[[i, j]].to_bits(), x[[i, j]].to_bits());
            }
        }
    }
}
