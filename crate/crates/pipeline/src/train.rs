//! Train/test split, scaling, cross-validated grid search and the final fit.

use std::path::{Path, PathBuf};

use aodforest::data::{split_train_test, Dataset, MinMaxScaler};
use aodforest::eval::{grid_search, CvTable, GridSpec, Params};
use ndarray::Array2;
use serde_json::json;

use crate::config::PipelineConfig;
use crate::error::{PipelineError, Result};
use crate::logs::RunLog;
use crate::model::{final_fit_seed, ModelBundle};
use crate::prepare::DATASET_FILE;

pub const MODEL_FILE: &str = "model.bin";
pub const CV_TABLE_FILE: &str = "cv_table.csv";
pub const TRAIN_SPLIT_FILE: &str = "train.csv";
pub const TEST_SPLIT_FILE: &str = "test.csv";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub best: Params,
    pub table: CvTable,
    pub train: Dataset,
    pub test: Dataset,
}

pub fn default_dataset_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir().join(DATASET_FILE)
}

fn core_error(e: PipelineError) -> aodforest::Error {
    match e {
        PipelineError::Core(c) => c,
        other => aodforest::Error::InvalidArgument(other.to_string()),
    }
}

/// Trains the configured family on `dataset` (default: the prepared
/// dataset) and writes the model bundle, CV table, splits and run log.
///
/// Scaling is fitted on the training split only. Cross-validation scores are
/// in original target units.
pub fn train(cfg: &PipelineConfig, dataset: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate(false)?;
    let seed = cfg.require_seed()?;
    let m = &cfg.model;
    let settings = m.settings()?;
    let grid = GridSpec::new(m.grid_axes(), m.cv_folds);
    for cell in grid.cells() {
        settings.spec(m.family, &cell)?;
    }
    let path = dataset.map(Path::to_path_buf).unwrap_or_else(|| default_dataset_path(cfg));
    let raw = Dataset::read_csv(&path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    let data = raw.complete_rows();
    let mut log = RunLog::new();
    log.record("dataset", json!({"path": path.display().to_string(), "rows": raw.len(), "complete_rows": data.len()}))?;
    let min_rows = 10 * m.cv_folds;
    if data.len() < min_rows {
        return Err(PipelineError::Data(format!(
            "insufficient rows: {} complete rows, need at least {min_rows} for {}-fold cross-validation",
            data.len(),
            m.cv_folds
        )));
    }
    let (train, test) = split_train_test(&data, m.train_fraction, seed)?;
    log.record("split", json!({"train": train.len(), "test": test.len(), "train_fraction": m.train_fraction}))?;

    let scaler = if m.scale_features {
        Some(MinMaxScaler::fit(&train, m.scale_target)?)
    } else {
        if m.scale_target {
            log::warn!("scale_target needs scale_features; the target is left unscaled");
        }
        None
    };
    let x_raw = train.feature_matrix();
    let x = match &scaler {
        Some(s) => s.transform_matrix(&x_raw)?,
        None => x_raw,
    };
    let y = train.targets()?;
    let scale_y = |v: &[f64]| -> aodforest::Result<Vec<f64>> {
        match scaler.as_ref().filter(|s| s.target_bounds.is_some()) {
            Some(s) => v.iter().map(|&t| s.scale_target(t)).collect(),
            None => Ok(v.to_vec()),
        }
    };
    let unscale_y = |v: Vec<f64>| -> aodforest::Result<Vec<f64>> {
        match scaler.as_ref().filter(|s| s.target_bounds.is_some()) {
            Some(s) => v.into_iter().map(|p| s.invert_target(p)).collect(),
            None => Ok(v),
        }
    };
    let family = |params: &Params, xt: &Array2<f64>, yt: &[f64], xv: &Array2<f64>, fold_seed: u64| {
        let spec = settings.spec(m.family, params).map_err(core_error)?;
        let model = spec.fit(xt, &scale_y(yt)?, fold_seed).map_err(core_error)?;
        unscale_y(model.predict(xv).map_err(core_error)?)
    };
    let (best, table) = grid_search(&x, &y, &family, &grid, seed)?;
    let best_row = &table.rows[table.best_index().expect("grid search returned a best cell")];
    log.record(
        "grid_search",
        json!({
            "cells": table.rows.len(),
            "invalid_cells": table.rows.iter().filter(|r| r.mean_score.is_none()).count(),
            "best": best.iter().map(|(k, v)| (k.clone(), v.to_string())).collect::<Vec<_>>(),
            "best_cv_rmse": best_row.mean_score,
            "best_fold_rmse": best_row.fold_scores,
        }),
    )?;

    let spec = settings.spec(m.family, &best)?;
    let model = spec.fit(&x, &scale_y(&y)?, final_fit_seed(seed))?;
    let bundle = ModelBundle::new(best.clone(), train.schema().clone(), scaler, model)?;
    log.record("model", json!({"family": bundle.family(), "file": MODEL_FILE}))?;

    let out = cfg.output_dir();
    std::fs::create_dir_all(&out).map_err(|e| PipelineError::io(&out, e))?;
    bundle.save(&out.join(MODEL_FILE))?;
    aodforest::raster::write_atomic(&out.join(CV_TABLE_FILE), |w| table.write_csv(w))?;
    train.write_csv(out.join(TRAIN_SPLIT_FILE))?;
    test.write_csv(out.join(TEST_SPLIT_FILE))?;
    log.write(&out.join(TRAIN_LOG_FILE))?;
    Ok(TrainOutcome {
        bundle,
        best,
        table,
        train,
        test,
    })
}
