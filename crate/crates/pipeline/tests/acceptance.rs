//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! Run alone with `cargo test --release -p aodforest-pipeline --test acceptance`;
//! a substring argument selects criteria by id.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use aodforest::cascade::{fit_cascade, CascadeConfig, LayerCount};
use aodforest::data::{split_train_test, MinMaxScaler};
use aodforest::eval::{compute_metrics, fit_linear, Params};
use aodforest::kriging::{OrdinaryKriging, VariogramKind, VariogramModel};
use aodforest::preprocess::{
    compute_uncertainty, correct_pm_humidity, extract_window_at, fit_sensor_regression, iqr_filter,
    merge_daily_aod, normalize_aod_pblh, AdjacencyClass, CloudClass, QaFlags,
};
use aodforest::raster::RasterGrid;
use aodforest::rng;
use aodforest::trees::{fit_forest, fit_tree, ForestEstimator, ForestKind, MaxFeatures, Node, TreeConfig};
use aodforest_pipeline::aqi::classify_aqi;
use aodforest_pipeline::model::{FittedModel, ModelBundle};
use aodforest_pipeline::synth::{benchmark_dataset, BENCHMARK_NOISE_SD, BENCHMARK_ROWS, BENCHMARK_SEED};
use ndarray::Array2;
use rand::Rng;

/// Outcome of one criterion: sub-checks with a short detail each.
#[derive(Default)]
struct Report {
    checks: Vec<(String, bool)>,
}

impl Report {
    fn check(&mut self, ok: bool, detail: impl Into<String>) {
        self.checks.push((detail.into(), ok));
    }

    fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.1)
    }
}

fn random_matrix(r: &mut impl Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| r.random_range(-10.0..10.0))
}

fn standard_normal(r: &mut impl Rng) -> f64 {
    let u1: f64 = r.random_range(f64::EPSILON..1.0);
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

// ---------------------------------------------------------------------------

fn ordering_benchmark(rep: &mut Report) {
    let start = Instant::now();
    let (ds, _) = benchmark_dataset(BENCHMARK_ROWS, BENCHMARK_NOISE_SD, BENCHMARK_SEED);
    let (train, test) = split_train_test(&ds, 0.7, BENCHMARK_SEED).unwrap();
    let scaler = MinMaxScaler::fit(&train, true).unwrap();
    let (xtr, ytr) = scaler.apply(&train).unwrap().training_arrays().unwrap();
    let (xte, _) = scaler.apply(&test).unwrap().training_arrays().unwrap();
    let yte = test.targets().unwrap();
    let r2 = |p: Vec<f64>| {
        let p: Vec<f64> = p.into_iter().map(|v| scaler.invert_target(v).unwrap()).collect();
        compute_metrics(&yte, &p).unwrap().r2.unwrap()
    };

    let linear = r2(fit_linear(&xtr, &ytr).unwrap().predict(&xte).unwrap());
    let rf_cfg = TreeConfig::default()
        .with_max_depth(Some(10))
        .with_max_features(MaxFeatures::Fraction(0.5));
    let rf = fit_forest(&xtr, &ytr, ForestKind::RandomForest, 100, &rf_cfg, BENCHMARK_SEED).unwrap();
    let rf = r2(rf.predict(&xte).unwrap());
    let cc = CascadeConfig {
        layers: LayerCount::Fixed(2),
        trees_per_estimator: 100,
        seed: BENCHMARK_SEED,
        ..CascadeConfig::default()
    };
    let cascade = r2(fit_cascade(&xtr, &ytr, &cc).unwrap().predict(&xte).unwrap());
    let secs = start.elapsed().as_secs_f64();

    rep.check(
        (0.55..=0.60).contains(&linear),
        format!("linear R2 {linear:.4} in the calibrated band [0.55, 0.60]"),
    );
    rep.check(rf >= linear + 0.05, format!("RF R2 {rf:.4} >= linear {linear:.4} + 0.05"));
    rep.check(cascade >= rf - 0.02, format!("cascade R2 {cascade:.4} >= RF {rf:.4} - 0.02"));
    rep.check(
        secs < 600.0,
        format!(
            "runtime {secs:.1}s < 600s on {} worker thread(s)",
            rayon::current_num_threads()
        ),
    );
}

// ---------------------------------------------------------------------------

fn metric_oracle(rep: &mut Report) {
    let mut r = rng::stream(808, &[]);
    let (mut worst, mut dominance, mut affine) = (0.0f64, true, 0.0f64);
    for _ in 0..100 {
        let n = r.random_range(2..200);
        let y: Vec<f64> = (0..n).map(|_| r.random_range(1.0..150.0)).collect();
        let p: Vec<f64> = y.iter().map(|v| 0.7 * v + 10.0 + 12.0 * standard_normal(&mut r)).collect();
        let m = compute_metrics(&y, &p).unwrap();

        // reference formulas, written out independently
        let nf = n as f64;
        let mut sq = 0.0;
        let mut ab = 0.0;
        for i in 0..n {
            sq += (y[i] - p[i]).powi(2);
            ab += (y[i] - p[i]).abs();
        }
        let rmse = (sq / nf).sqrt();
        let mae = ab / nf;
        let ybar = y.iter().sum::<f64>() / nf;
        let pbar = p.iter().sum::<f64>() / nf;
        let mut cov = 0.0;
        let mut vy = 0.0;
        let mut vp = 0.0;
        for i in 0..n {
            cov += (y[i] - ybar) * (p[i] - pbar);
            vy += (y[i] - ybar).powi(2);
            vp += (p[i] - pbar).powi(2);
        }
        let r2 = cov * cov / (vy * vp);
        let ape = ab / y.iter().sum::<f64>();
        for (a, b) in [(m.rmse, rmse), (m.mae, mae), (m.r2.unwrap(), r2), (m.ape.unwrap(), ape)] {
            worst = worst.max((a - b).abs());
        }
        dominance &= m.rmse >= m.mae;
        let scale = r.random_range(0.01..50.0);
        let shift = r.random_range(-100.0..100.0);
        let q: Vec<f64> = p.iter().map(|v| scale * v + shift).collect();
        affine = affine.max((compute_metrics(&y, &q).unwrap().r2.unwrap() - m.r2.unwrap()).abs());
    }
    rep.check(worst <= 1e-9, format!("max deviation from reference formulas {worst:.2e} <= 1e-9"));
    rep.check(dominance, "RMSE >= MAE on all 100 vectors");
    rep.check(affine <= 1e-9, format!("R2 change under positive affine maps {affine:.2e} <= 1e-9"));
}

// ---------------------------------------------------------------------------

fn tree_forest_oracles(rep: &mut Report) {
    let mut r = rng::stream(17, &[]);
    let x = random_matrix(&mut r, 300, 5);
    let y: Vec<f64> = (0..300).map(|_| r.random_range(0.0..100.0)).collect();
    let tree = fit_tree(&x, &y, &TreeConfig::default()).unwrap();
    let exact = (0..300).all(|i| tree.predict(&x.row(i).to_vec()).unwrap() == y[i]);
    rep.check(exact, "fully grown tree reproduces 300 unique training targets exactly");

    // four-point fixture: weighted child SSE of every midpoint split
    let xs = [1.0, 2.0, 3.0, 4.0];
    let ys = [0.0, 0.0, 10.0, 10.0];
    let sse = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|a| (a - m).powi(2)).sum::<f64>()
    };
    let mut best = (f64::INFINITY, 0.0);
    for k in 1..4 {
        let t = 0.5 * (xs[k - 1] + xs[k]);
        let cost = sse(&ys[..k]) + sse(&ys[k..]);
        if cost < best.0 {
            best = (cost, t);
        }
    }
    let x4 = Array2::from_shape_vec((4, 1), xs.to_vec()).unwrap();
    let t4 = fit_tree(&x4, &ys, &TreeConfig::default()).unwrap();
    let root = match t4.nodes()[0] {
        Node::Split { threshold, .. } => Some(threshold),
        Node::Leaf { .. } => None,
    };
    rep.check(
        root == Some(best.1) && best.1 > 2.0 && best.1 < 3.0,
        format!("four-point root threshold {root:?} equals scan oracle {}", best.1),
    );

    let mut dev = 0.0f64;
    for kind in [ForestKind::RandomForest, ForestKind::ExtraTrees] {
        let f = fit_forest(&x, &y, kind, 25, &TreeConfig::default().with_max_features(MaxFeatures::Sqrt), 3).unwrap();
        let pred = f.predict(&x).unwrap();
        for i in 0..x.nrows() {
            let row = x.row(i).to_vec();
            let mean = f.trees().iter().map(|t| t.predict(&row).unwrap()).sum::<f64>() / 25.0;
            dev = dev.max((pred[i] - mean).abs());
        }
    }
    rep.check(dev <= 1e-12, format!("forest minus mean of trees {dev:.2e} <= 1e-12"));

    let n = 1000;
    let fractions: Vec<f64> = (0..200)
        .map(|t| {
            let mut seen = vec![false; n];
            ForestEstimator::bootstrap_indices(n, 99, t).into_iter().for_each(|i| seen[i] = true);
            seen.iter().filter(|s| **s).count() as f64 / n as f64
        })
        .collect();
    let mean = fractions.iter().sum::<f64>() / 200.0;
    let target = 1.0 - (-1.0f64).exp();
    rep.check(
        (mean - target).abs() <= 0.03,
        format!("bootstrap unique fraction {mean:.4} vs 1 - 1/e = {target:.4} over 200 trees at n=1000"),
    );
}

// ---------------------------------------------------------------------------

fn cascade_structure(rep: &mut Report) {
    let mut r = rng::stream(23, &[]);
    let mut widths_ok = true;
    let mut detail = Vec::new();
    let mut head_dev = 0.0f64;
    for d in [3usize, 14] {
        let x = random_matrix(&mut r, 60, d);
        let y: Vec<f64> = (0..60).map(|i| x[[i, 0]].sin() * 10.0 + x[[i, d - 1]]).collect();
        for j in 1..=3 {
            let cfg = CascadeConfig {
                layers: LayerCount::Fixed(j),
                trees_per_estimator: 4,
                cv_folds: 3,
                seed: (d * 10 + j) as u64,
                ..CascadeConfig::default()
            };
            let m = fit_cascade(&x, &y, &cfg).unwrap();
            let want: Vec<usize> = (0..=j).map(|l| d + 4 * l).collect();
            let z = m.transform(&x).unwrap();
            widths_ok &= m.layer_widths() == want && z.ncols() == d + 4 * j;
            detail.push(format!("d={d},j={j}:{}", z.ncols()));

            let heads = m.head_predictions(&x).unwrap();
            let pred = m.predict(&x).unwrap();
            for i in 0..x.nrows() {
                let mean = heads.iter().map(|h| h[i]).sum::<f64>() / heads.len() as f64;
                head_dev = head_dev.max((pred[i] - mean).abs());
            }
        }
    }
    rep.check(widths_ok, format!("widths d + 4j ({})", detail.join(" ")));
    rep.check(head_dev <= 1e-12, format!("output minus head mean {head_dev:.2e} <= 1e-12"));

    let x = random_matrix(&mut r, 50, 4);
    let y: Vec<f64> = (0..50).map(|i| x[[i, 1]] * x[[i, 2]]).collect();
    let cfg = CascadeConfig {
        layers: LayerCount::Fixed(0),
        trees_per_estimator: 6,
        seed: 4,
        ..CascadeConfig::default()
    };
    let m = fit_cascade(&x, &y, &cfg).unwrap();
    let base: Vec<Vec<f64>> = m.head().iter().map(|f| f.predict(&x).unwrap()).collect();
    let pred = m.predict(&x).unwrap();
    let dev = (0..50)
        .map(|i| (pred[i] - base.iter().map(|b| b[i]).sum::<f64>() / 4.0).abs())
        .fold(0.0, f64::max);
    let kinds: Vec<ForestKind> = m.head().iter().map(|f| f.kind()).collect();
    rep.check(
        m.n_layers() == 0 && dev <= 1e-12 && kinds == cfg.composition(),
        format!("0-layer model equals the average of its 4 base forests ({dev:.2e})"),
    );
}

// ---------------------------------------------------------------------------

/// Gaussian elimination with partial pivoting on a dense copy.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}

fn kriging(rep: &mut Report) {
    let mut r = rng::stream(31, &[]);
    let kinds = VariogramKind::ALL;
    let (mut wsum, mut exact) = (0.0f64, 0.0f64);
    for trial in 0..30 {
        let pts: Vec<(f64, f64, f64)> = (0..r.random_range(3..40))
            .map(|_| (r.random_range(0.0..10.0), r.random_range(0.0..10.0), r.random_range(-5.0..5.0)))
            .collect();
        let vg = VariogramModel::new(kinds[trial % 3], 0.0, r.random_range(0.5..3.0), r.random_range(1.0..8.0)).unwrap();
        let ok = OrdinaryKriging::new(&pts, vg).unwrap();
        for _ in 0..20 {
            let s = ok.solve(r.random_range(-1.0..11.0), r.random_range(-1.0..11.0)).unwrap();
            wsum = wsum.max((s.weights.iter().sum::<f64>() - 1.0).abs());
        }
        if kinds[trial % 3] != VariogramKind::Gaussian {
            for p in &pts {
                exact = exact.max((ok.solve(p.0, p.1).unwrap().value - p.2).abs());
            }
        }
    }
    rep.check(wsum <= 1e-10, format!("weights sum to 1 within {wsum:.2e} (600 targets)"));
    rep.check(exact <= 1e-8, format!("zero-nugget value at samples within {exact:.2e}"));

    // three samples: the bordered 4x4 system built and solved by hand
    let samples = [(0.0, 0.0, 1.0), (3.0, 0.0, 4.0), (0.0, 2.0, -2.0)];
    let vg = VariogramModel::new(VariogramKind::Spherical, 0.1, 2.0, 5.0).unwrap();
    let target = (1.0, 1.0);
    let gamma = |h: f64| {
        if h == 0.0 {
            0.0
        } else if h >= 5.0 {
            2.1
        } else {
            let s = h / 5.0;
            0.1 + 2.0 * (1.5 * s - 0.5 * s * s * s)
        }
    };
    let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let mut a = vec![vec![0.0; 4]; 4];
    let mut b = vec![0.0; 4];
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = gamma(dist((samples[i].0, samples[i].1), (samples[j].0, samples[j].1)));
        }
        a[i][3] = 1.0;
        a[3][i] = 1.0;
        b[i] = gamma(dist((samples[i].0, samples[i].1), target));
    }
    b[3] = 1.0;
    let sol = dense_solve(a, b);
    let want = (0..3).map(|i| sol[i] * samples[i].2).sum::<f64>();
    let got = OrdinaryKriging::new(&samples, vg).unwrap().solve(target.0, target.1).unwrap();
    let wdev = (0..3).map(|i| (got.weights[i] - sol[i]).abs()).fold((got.lagrange - sol[3]).abs(), f64::max);
    rep.check(
        wdev <= 1e-9 && (got.value - want).abs() <= 1e-9,
        format!("3-sample system: weights {wdev:.2e}, value {:.2e} from dense oracle", (got.value - want).abs()),
    );

    let constant: Vec<(f64, f64, f64)> = (0..25).map(|i| ((i % 5) as f64, (i / 5) as f64, 17.25)).collect();
    let mut all_equal = true;
    for kind in kinds {
        let ok = OrdinaryKriging::new(&constant, VariogramModel::new(kind, 0.2, 1.0, 3.0).unwrap()).unwrap();
        for _ in 0..50 {
            all_equal &= ok.solve(r.random_range(-2.0..6.0), r.random_range(-2.0..6.0)).unwrap().value == 17.25;
        }
    }
    rep.check(all_equal, "constant field reproduced exactly for every variogram kind");
}

// ---------------------------------------------------------------------------

fn quantile_oracle(values: &[f64], p: f64) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = p * (s.len() as f64 - 1.0);
    let below = pos.floor();
    let i = below as usize;
    if i + 1 >= s.len() {
        s[i]
    } else {
        s[i] * (1.0 - (pos - below)) + s[i + 1] * (pos - below)
    }
}

fn preprocessing(rep: &mut Report) {
    let humidity = correct_pm_humidity(50.0, 20.0).unwrap() == 62.5
        && correct_pm_humidity(30.0, 0.0).unwrap() == 30.0
        && correct_pm_humidity(10.0, 50.0).unwrap() == 20.0
        && correct_pm_humidity(10.0, 100.0).is_err();
    rep.check(humidity, "humidity correction: 62.5, 30, 20 and rejection at RH 100");

    let naod = normalize_aod_pblh(0.2, 500.0) == Some(0.2 / 500.0)
        && (normalize_aod_pblh(0.2, 500.0).unwrap() - 4.0e-4).abs() < 1e-18
        && normalize_aod_pblh(0.0, 500.0) == Some(0.0)
        && (normalize_aod_pblh(0.0555, 27.75).unwrap() - 2.0e-3).abs() < 1e-18
        && normalize_aod_pblh(0.2, 0.0).is_none();
    rep.check(naod, "AOD/PBLH normalisation: 4.0e-4, 0, 2.0e-3 and missing at PBLH 0");

    let identity = fit_sensor_regression(&[(0.1, 0.1), (0.2, 0.2), (0.5, 0.5)]).unwrap();
    let merge = merge_daily_aod(Some(0.2), Some(0.3), &identity) == Some(0.25)
        && merge_daily_aod(None, None, &identity).is_none()
        && (merge_daily_aod(Some(0.2), None, &identity).unwrap() - 0.2).abs() < 1e-15
        && (merge_daily_aod(None, Some(0.2), &identity).unwrap() - 0.2).abs() < 1e-15;
    rep.check(merge, "sensor merge: 0.25, missing, identity fill 0.2");

    let best = QaFlags {
        adjacency: AdjacencyClass::Clear,
        cloud: CloudClass::PossiblyCloudy,
    };
    let bad = QaFlags {
        adjacency: AdjacencyClass::Other,
        cloud: CloudClass::Clear,
    };
    let four: [Option<QaFlags>; 9] = std::array::from_fn(|i| Some(if i < 4 { best } else { bad }));
    let u = compute_uncertainty(&[Some(best); 9]) == 1.0
        && compute_uncertainty(&[Some(bad); 9]) == 0.0
        && compute_uncertainty(&four) == 4.0 / 9.0;
    rep.check(u, "uncertainty: 1, 0 and 4/9");

    let mut r = rng::stream(50, &[]);
    let mut iqr_ok = 0;
    for _ in 0..50 {
        let n = r.random_range(4..80);
        let mut v: Vec<f64> = (0..n).map(|_| 30.0 + 10.0 * standard_normal(&mut r)).collect();
        for _ in 0..r.random_range(0..4) {
            v.push(r.random_range(80.0..300.0));
        }
        let (q1, q3) = (quantile_oracle(&v, 0.25), quantile_oracle(&v, 0.75));
        let (lo, hi) = (q1 - (q3 - q1), q3 + (q3 - q1));
        let want_out: Vec<f64> = v.iter().copied().filter(|x| *x < lo || *x > hi).collect();
        let want_in: Vec<f64> = v.iter().copied().filter(|x| *x >= lo && *x <= hi).collect();
        let got = iqr_filter(&v);
        if got.outliers == want_out && got.inliers == want_in {
            iqr_ok += 1;
        }
    }
    rep.check(iqr_ok == 50, format!("IQR filter matches the quantile oracle on {iqr_ok}/50 lists"));

    let window = |vals: [Option<f64>; 9]| {
        let g = RasterGrid::from_values("AOD", 3, 3, 0.0, 0.0, 1.0, vals.to_vec()).unwrap();
        extract_window_at(&g, 1, 1)
    };
    let uniform = window([Some(0.2); 9]);
    let two = window([Some(0.2), Some(0.3), None, None, None, None, None, None, None]);
    let spread = window([Some(0.1), Some(0.1), Some(1.2), None, None, None, None, None, None]);
    // sample standard deviation of {0.1, 0.1, 1.2} by hand
    let hand = ((2.0 * (0.1f64 - 1.4 / 3.0).powi(2) + (1.2f64 - 1.4 / 3.0).powi(2)) / 2.0).sqrt();
    let gates = uniform.aod.is_some_and(|a| (a - 0.2).abs() < 1e-15)
        && uniform.stdev.is_some_and(|s| s.abs() < 1e-15)
        && two.aod.is_none()
        && two.n_valid == 2
        && spread.aod.is_none()
        && spread.stdev.is_some_and(|s| (s - hand).abs() < 1e-12 && s >= 0.5);
    rep.check(gates, format!("window gates: uniform passes, 2 valid fails, stdev {hand:.4} fails"));
}

// ---------------------------------------------------------------------------

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_aodforest")
}

fn run_cli(dir: &Path, threads: usize, args: &[&str]) -> Result<(), String> {
    let out = Command::new(bin())
        .current_dir(dir)
        .args(["-c", "config.toml", "--threads", &threads.to_string()])
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn files_under(dir: &Path) -> BTreeMap<String, PathBuf> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), p);
            }
        }
    }
    out
}

const DETERMINISM_CONFIG: &str = r#"seed = 2024
output_dir = "out"

[synth]
n_stations = 6
n_days = 12

[model]
cv_folds = 3

[model.cascade]
trees_per_estimator = 10
layers = 1
"#;

fn determinism(rep: &mut Report) {
    let root = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for (run, threads) in [(0, 1), (1, 3)] {
        let dir = root.path().join(format!("run{run}"));
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join("config.toml"), DETERMINISM_CONFIG).unwrap();
        let steps: [&[&str]; 5] = [
            &["synth"],
            &["prepare"],
            &["train"],
            &["evaluate"],
            &["predict-map", "--date", "2018-01-03", "2018-01-08"],
        ];
        for step in steps {
            if let Err(e) = run_cli(&dir, threads, step) {
                rep.check(false, format!("run {run}: {e}"));
                return;
            }
        }
        dirs.push(dir);
    }
    let (a, b) = (files_under(&dirs[0]), files_under(&dirs[1]));
    rep.check(
        a.keys().eq(b.keys()),
        format!("both runs wrote the same {} files", a.len()),
    );
    let csv: Vec<&String> = a.keys().filter(|k| k.ends_with(".csv")).collect();
    let identical = csv.iter().all(|k| b.get(*k).is_some_and(|p| fs::read(p).unwrap() == fs::read(&a[*k]).unwrap()));
    rep.check(
        identical && csv.len() >= 10,
        format!("{} CSV outputs byte-identical (1 vs 3 threads)", csv.len()),
    );
    let model_same = fs::read(&a["out/model.bin"]).unwrap() == fs::read(&b["out/model.bin"]).unwrap();
    rep.check(model_same, "model containers byte-identical");
    let mut worst = 0.0f64;
    let mut rasters = 0;
    let mut same_mask = true;
    for k in a.keys().filter(|k| k.starts_with("out/maps/") && k.ends_with(".asc")) {
        let ga = RasterGrid::read_ascii(&a[k]).unwrap();
        let gb = RasterGrid::read_ascii(&b[k]).unwrap();
        for (x, y) in ga.values().iter().zip(gb.values()) {
            match (x, y) {
                (Some(x), Some(y)) => worst = worst.max((x - y).abs()),
                (None, None) => {}
                _ => same_mask = false,
            }
        }
        rasters += 1;
    }
    rep.check(
        rasters == 2 && same_mask && worst <= 1e-12,
        format!("{rasters} PM2.5 rasters agree to {worst:.1e}"),
    );
}

// ---------------------------------------------------------------------------

fn serialization(rep: &mut Report) {
    let (ds, _) = benchmark_dataset(400, 8.0, 77);
    let scaler = MinMaxScaler::fit(&ds, true).unwrap();
    let (x, y) = scaler.apply(&ds).unwrap().training_arrays().unwrap();
    let tree = TreeConfig::default().with_max_features(MaxFeatures::Sqrt);
    let models = [
        FittedModel::Cascade(
            fit_cascade(
                &x,
                &y,
                &CascadeConfig {
                    trees_per_estimator: 8,
                    cv_folds: 3,
                    seed: 5,
                    ..CascadeConfig::default()
                },
            )
            .unwrap(),
        ),
        FittedModel::Forest(fit_forest(&x, &y, ForestKind::RandomForest, 20, &tree, 6).unwrap()),
        FittedModel::Forest(fit_forest(&x, &y, ForestKind::ExtraTrees, 20, &tree, 7).unwrap()),
        FittedModel::Linear(fit_linear(&x, &y).unwrap()),
    ];
    let mut r = rng::stream(1000, &[]);
    let lo: Vec<f64> = scaler.feature_min.clone();
    let hi: Vec<f64> = scaler.feature_max.clone();
    let inputs = Array2::from_shape_fn((1000, 14), |(_, j)| {
        let span = hi[j] - lo[j];
        r.random_range(lo[j] - 0.1 * span..=hi[j] + 0.1 * span)
    });
    let dir = tempfile::tempdir().unwrap();
    for model in models {
        let family = model.family();
        let bundle = ModelBundle::new(Params::new(), ds.schema().clone(), Some(scaler.clone()), model).unwrap();
        let path = dir.path().join(format!("{family}.bin"));
        bundle.save(&path).unwrap();
        let loaded = ModelBundle::load(&path).unwrap();
        let before = bundle.predict(&inputs).unwrap();
        let after = loaded.predict(&inputs).unwrap();
        let same = before.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits());
        rep.check(
            same && loaded == bundle,
            format!("{family}: 1000 predictions bit-identical after save/load"),
        );
    }
}

// ---------------------------------------------------------------------------

fn aqi(rep: &mut Report) {
    let probes = [
        (12.0, "Good"),
        (12.1, "Moderate"),
        (35.4, "Moderate"),
        (35.5, "Unhealthy for Sensitive Groups"),
        (55.4, "Unhealthy for Sensitive Groups"),
        (55.5, "Unhealthy"),
        (150.4, "Unhealthy"),
        (150.5, "Very Unhealthy"),
        (250.4, "Very Unhealthy"),
        (250.5, "Hazardous"),
    ];
    for (pm, want) in probes {
        let got = classify_aqi(pm).unwrap();
        rep.check(
            got.category.label == want && !got.out_of_table,
            format!("{pm} -> {} (expected {want})", got.category.label),
        );
    }
}

// ---------------------------------------------------------------------------

type Criterion = (&'static str, &'static str, fn(&mut Report));

const CRITERIA: [Criterion; 9] = [
    ("ordering", "cascade >= RF - 0.02, RF >= linear + 0.05 on the synthetic benchmark", ordering_benchmark),
    ("metrics", "metric oracle equivalence", metric_oracle),
    ("trees", "tree and forest oracles", tree_forest_oracles),
    ("cascade", "cascade structure", cascade_structure),
    ("kriging", "ordinary kriging", kriging),
    ("preprocess", "preprocessing unit suite", preprocessing),
    ("determinism", "end-to-end determinism across thread counts", determinism),
    ("serialization", "model save/load round trip", serialization),
    ("aqi", "AQI boundary probes", aqi),
];

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, title, run) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| id.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let mut rep = Report::default();
        let outcome = catch_unwind(AssertUnwindSafe(|| run(&mut rep)));
        if let Err(panic) = outcome {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            rep.check(false, format!("panicked: {msg}"));
        }
        let ok = rep.passed();
        println!(
            "{} {id}: {title} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        for (detail, c) in &rep.checks {
            println!("    [{}] {detail}", if *c { "ok" } else { "FAIL" });
        }
        if !ok {
            failed.push(id);
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
