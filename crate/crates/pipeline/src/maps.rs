//! Daily PM2.5 maps, gap filling by kriging, annual means and rendering.

use std::path::{Path, PathBuf};

use aodforest::kriging::{krige_predict_local, kriging_grid_search, KrigingSelection, VariogramKind};
use aodforest::preprocess::{extract_window_at, fit_sensor_regression, merge_aod_grids, uncertainty_at};
use aodforest::raster::{band_file_name, RasterGrid};
use aodforest::rng;
use chrono::{Datelike, NaiveDate};
use ndarray::Array2;
use serde_json::json;

use crate::aqi::classify_aqi;
use crate::config::PipelineConfig;
use crate::error::{PipelineError, Result};
use crate::logs::RunLog;
use crate::model::ModelBundle;
use crate::prepare::{assemble_features, feature_schema, read_regression, thin_points, DayRasters, NAOD_NAME, REGRESSION_FILE};

pub const MAP_BAND: &str = "PM25";
pub const MAPS_DIR: &str = "maps";
/// Colour of masked cells in rendered images.
pub const MASK_COLOR: [u8; 3] = [128, 128, 128];

#[derive(Clone, Debug)]
pub struct KrigingFill {
    pub grid: RasterGrid,
    pub filled: Vec<(usize, usize)>,
    pub selection: Option<KrigingSelection>,
}

/// Fills every masked cell of `grid` by ordinary kriging from its valid
/// cells. The variogram kind is chosen by cross-validation on at most
/// `max_points` thinned cells; each fill uses the `neighbours` nearest
/// valid cells. Valid cells are never modified.
pub fn fill_by_kriging(
    grid: &RasterGrid,
    kinds: &[VariogramKind],
    folds: usize,
    neighbours: usize,
    max_points: usize,
    seed: u64,
) -> Result<KrigingFill> {
    let mut holes = Vec::new();
    for r in 0..grid.nrows {
        for c in 0..grid.ncols {
            if grid.get(r, c).is_none() {
                holes.push((r, c));
            }
        }
    }
    if holes.is_empty() {
        return Ok(KrigingFill {
            grid: grid.clone(),
            filled: holes,
            selection: None,
        });
    }
    let samples = grid.valid_points();
    if samples.is_empty() {
        return Err(PipelineError::Numerical("no predicted cells to krige from".into()));
    }
    let selection = kriging_grid_search(&thin_points(&samples, max_points), kinds, folds, Some(neighbours), seed)?;
    let targets: Vec<(f64, f64)> = holes
        .iter()
        .map(|&(r, c)| {
            let (lat, lon) = grid.cell_center(r, c);
            (lon, lat)
        })
        .collect();
    let values = krige_predict_local(&samples, &selection.model, &targets, neighbours)?;
    let mut out = grid.clone();
    for (&(r, c), (v, _)) in holes.iter().zip(values) {
        debug_assert!(out.get(r, c).is_none());
        out.set(r, c, Some(v));
    }
    Ok(KrigingFill {
        grid: out,
        filled: holes,
        selection: Some(selection),
    })
}

#[derive(Clone, Debug)]
pub struct DailyMap {
    pub date: NaiveDate,
    /// Model predictions only; masked where features were incomplete.
    pub predicted: RasterGrid,
    /// Predictions with the masked cells kriged.
    pub filled: RasterGrid,
    pub n_predicted: usize,
    pub n_filled: usize,
    pub selection: Option<KrigingSelection>,
}

/// Model predictions on every cell with a complete feature vector.
pub fn predict_cells(bundle: &ModelBundle, day: &DayRasters, cfg: &PipelineConfig, log: &mut RunLog) -> Result<RasterGrid> {
    let normalize = bundle.schema.names().first().is_some_and(|n| n == NAOD_NAME);
    if bundle.schema.names() != feature_schema(normalize).names() {
        return Err(PipelineError::Data(format!(
            "model schema {:?} is not the raster feature schema",
            bundle.schema.names()
        )));
    }
    let out_dir = cfg.output_dir();
    let (terra, aqua) = day.aod_grids(cfg.preprocess.strict_qa)?;
    let regression = match read_regression(&out_dir.join(REGRESSION_FILE))? {
        Some(r) => r,
        None => {
            let pairs: Vec<(f64, f64)> = terra
                .values()
                .iter()
                .zip(aqua.values())
                .filter_map(|(t, a)| Some(((*t)?, (*a)?)))
                .collect();
            fit_sensor_regression(&pairs)?
        }
    };
    log.record("sensor_regression", regression)?;
    let merged = merge_aod_grids(&aqua, &terra, &regression)?;

    let mut cells = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    for r in 0..merged.nrows {
        for c in 0..merged.ncols {
            let Some(aod) = extract_window_at(&merged, r, c).aod else {
                continue;
            };
            let met: Option<Vec<f64>> = day.met.iter().map(|g| g.get(r, c)).collect();
            let Some(met) = met else {
                continue;
            };
            let met: [f64; 9] = met.try_into().expect("nine bands");
            let (lat, lon) = merged.cell_center(r, c);
            let u = uncertainty_at(&day.qa, r, c);
            if let Some(f) = assemble_features(aod, u, lat, lon, &met, day.date, normalize) {
                rows.extend(f);
                cells.push((r, c));
            }
        }
    }
    let mut grid = merged.like(MAP_BAND);
    if !cells.is_empty() {
        let x = Array2::from_shape_vec((cells.len(), bundle.schema.len()), rows).expect("row-major features");
        let pred = bundle.predict(&x)?;
        for (&(r, c), p) in cells.iter().zip(pred) {
            grid.set(r, c, Some(p));
        }
    }
    Ok(grid)
}

pub fn map_path(cfg: &PipelineConfig, date: NaiveDate) -> PathBuf {
    cfg.output_dir().join(MAPS_DIR).join(band_file_name(MAP_BAND, date))
}

/// Predicts, fills and writes `maps/PM25_<date>.asc`, a rendered `.ppm`
/// and `maps/predict_log_<date>.jsonl`.
pub fn predict_map(cfg: &PipelineConfig, model: &Path, date: NaiveDate) -> Result<DailyMap> {
    cfg.validate(false)?;
    let bundle = ModelBundle::load(model)?;
    let day = DayRasters::load(cfg, date)?
        .map_err(|missing| PipelineError::Data(format!("missing band rasters for {date}: {}", missing.join(", "))))?;
    let mut log = RunLog::new();
    let predicted = predict_cells(&bundle, &day, cfg, &mut log)?;
    let n_predicted = predicted.n_valid();
    log.record("predicted", json!({"date": date, "cells": predicted.n_cells(), "predicted": n_predicted}))?;
    let seed = rng::derive_seed(cfg.seed.unwrap_or(0), &[0x3A9, date.num_days_from_ce() as u64]);
    let fill = fill_by_kriging(
        &predicted,
        &cfg.map.variogram_kinds,
        cfg.map.kriging_folds,
        cfg.map.kriging_neighbours,
        cfg.preprocess.max_variogram_points,
        seed,
    )?;
    log.record(
        "kriging_fill",
        json!({"filled": fill.filled.len(), "kind": fill.selection.as_ref().map(|s| s.kind),
               "model": fill.selection.as_ref().map(|s| s.model), "scores": fill.selection.as_ref().map(|s| &s.scores)}),
    )?;

    let path = map_path(cfg, date);
    let dir = path.parent().expect("map path has a parent");
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    fill.grid.write_ascii(&path)?;
    write_ppm(&fill.grid, cfg.map.pixel_scale, &path.with_extension("ppm"))?;
    log.write(&dir.join(format!("predict_log_{date}.jsonl")))?;
    Ok(DailyMap {
        date,
        n_predicted,
        n_filled: fill.filled.len(),
        predicted,
        filled: fill.grid,
        selection: fill.selection,
    })
}

/// Per-cell mean over the days where the cell is valid; masked only when
/// masked on every day.
pub fn annual_map(grids: &[RasterGrid]) -> Result<RasterGrid> {
    let first = grids.first().ok_or_else(|| PipelineError::Data("annual map needs at least one daily raster".into()))?;
    if let Some(g) = grids.iter().find(|g| !g.is_aligned_with(first)) {
        return Err(PipelineError::Data(format!("raster {} is not aligned with {}", g.band, first.band)));
    }
    let mut out = first.like(MAP_BAND);
    for i in 0..first.n_cells() {
        let (sum, n) = grids
            .iter()
            .filter_map(|g| g.values()[i])
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        let (r, c) = (i / first.ncols, i % first.ncols);
        out.set(r, c, (n > 0).then(|| sum / n as f64));
    }
    Ok(out)
}

/// Binary PPM with the fixed AQI colour classes; each cell becomes a
/// `scale` x `scale` block.
pub fn render_ppm(grid: &RasterGrid, scale: usize) -> Vec<u8> {
    let scale = scale.max(1);
    let (w, h) = (grid.ncols * scale, grid.nrows * scale);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(w * h * 3);
    for r in 0..grid.nrows {
        let line: Vec<u8> = (0..grid.ncols)
            .flat_map(|c| {
                let color = match grid.get(r, c) {
                    Some(v) => classify_aqi(v.max(0.0)).map(|a| a.category.color).unwrap_or(MASK_COLOR),
                    None => MASK_COLOR,
                };
                std::iter::repeat_n(color, scale).flatten()
            })
            .collect();
        for _ in 0..scale {
            out.extend_from_slice(&line);
        }
    }
    out
}

pub fn write_ppm(grid: &RasterGrid, scale: usize, path: &Path) -> Result<()> {
    let bytes = render_ppm(grid, scale);
    aodforest::raster::write_atomic(path, |w| {
        std::io::Write::write_all(w, &bytes)?;
        Ok(())
    })?;
    Ok(())
}
