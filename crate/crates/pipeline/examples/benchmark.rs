//! Standard synthetic benchmark: linear vs random forest vs cascade.
//!
//! `cargo run --release -p aodforest-pipeline --example benchmark [noise_sd] [trees]`

use std::time::Instant;

use aodforest::cascade::{fit_cascade, CascadeConfig, LayerCount};
use aodforest::data::{split_train_test, MinMaxScaler};
use aodforest::eval::{compute_metrics, fit_linear};
use aodforest::trees::{fit_forest, ForestKind, MaxFeatures, TreeConfig};
use aodforest_pipeline::synth::{benchmark_dataset, BENCHMARK_NOISE_SD, BENCHMARK_ROWS, BENCHMARK_SEED};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let noise = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(BENCHMARK_NOISE_SD);
    let trees = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(100);
    let start = Instant::now();
    let (ds, _) = benchmark_dataset(BENCHMARK_ROWS, noise, BENCHMARK_SEED);
    let (train, test) = split_train_test(&ds, 0.7, BENCHMARK_SEED)?;
    let scaler = MinMaxScaler::fit(&train, true)?;
    let (xtr, ytr) = scaler.apply(&train)?.training_arrays()?;
    let (xte, _) = scaler.apply(&test)?.training_arrays()?;
    let yte = test.targets()?;
    let back = |p: Vec<f64>| -> Vec<f64> { p.into_iter().map(|v| scaler.invert_target(v).unwrap()).collect() };

    let lin = fit_linear(&xtr, &ytr)?;
    let m = compute_metrics(&yte, &back(lin.predict(&xte)?))?;
    println!("linear  r2 {:.4} rmse {:.3}  ({:.1}s)", m.r2.unwrap(), m.rmse, start.elapsed().as_secs_f64());

    let t = Instant::now();
    let cfg = TreeConfig::default()
        .with_max_depth(Some(10))
        .with_max_features(MaxFeatures::Fraction(0.5));
    let rf = fit_forest(&xtr, &ytr, ForestKind::RandomForest, trees, &cfg, BENCHMARK_SEED)?;
    let m = compute_metrics(&yte, &back(rf.predict(&xte)?))?;
    println!("rf      r2 {:.4} rmse {:.3}  ({:.1}s)", m.r2.unwrap(), m.rmse, t.elapsed().as_secs_f64());

    let t = Instant::now();
    let cc = CascadeConfig {
        layers: LayerCount::Fixed(2),
        trees_per_estimator: trees,
        seed: BENCHMARK_SEED,
        ..CascadeConfig::default()
    };
    let model = fit_cascade(&xtr, &ytr, &cc)?;
    let m = compute_metrics(&yte, &back(model.predict(&xte)?))?;
    println!(
        "cascade r2 {:.4} rmse {:.3}  ({:.1}s) oof {:?}",
        m.r2.unwrap(),
        m.rmse,
        t.elapsed().as_secs_f64(),
        model.validation_rmse()
    );
    println!("total {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
