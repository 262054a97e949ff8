//! Station and raster ingestion into the fourteen-feature training table.
//!
//! Order of operations: hourly humidity correction, daily means, per-station
//! IQR filter, inter-sensor regression over every collocated cell, merged
//! daily AOD, 3x3 window gates around each station, QA uncertainty, and
//! meteorology kriged from the raster cell centres to the station.

use std::collections::BTreeMap;
use std::path::Path;

use aodforest::data::{Dataset, FeatureSchema, Sample, FEATURE_NAMES};
use aodforest::kriging::{
    default_max_dist, empirical_variogram, fit_variogram, krige_predict_local, kriging_grid_search, VariogramKind,
    VariogramModel, DEFAULT_BINS,
};
use aodforest::preprocess::{
    correct_series, daily_average, extract_window_at, fit_sensor_regression, iqr_inlier_mask, mask_by_qa,
    merge_aod_grids, normalize_aod_pblh, read_station_csv, uncertainty_at, LinearFit, SensorRegression,
    WindowRejection,
};
use aodforest::raster::{band_path, RasterGrid};
use aodforest::rng;
use chrono::{Datelike, NaiveDate};
use serde::Serialize;
use serde_json::json;

use crate::config::PipelineConfig;
use crate::error::{PipelineError, Result};
use crate::logs::RunLog;

pub const AOD_TERRA: &str = "AOD_T";
pub const AOD_AQUA: &str = "AOD_A";
pub const QA_BAND: &str = "QA";
/// Meteorological bands in feature order.
pub const MET_BANDS: [&str; 9] = ["T", "DT", "PBLH", "SP", "LAI", "WS", "WD", "UV", "RH"];
const PBLH_INDEX: usize = 2;
pub const NAOD_NAME: &str = "nAOD";

pub const DATASET_FILE: &str = "dataset.csv";
pub const PREPARE_LOG_FILE: &str = "prepare_log.jsonl";
pub const VARIOGRAM_FILE: &str = "variograms.csv";
pub const REGRESSION_FILE: &str = "sensor_regression.json";

/// Drop gates in the order they apply to a station-day.
pub const GATES: [&str; 8] = [
    "no_valid_pm",
    "iqr_outlier",
    "outside_grid",
    "missing_raster",
    "window_too_few_valid",
    "window_too_variable",
    "met_kriging_failed",
    "pblh_invalid",
];

/// Every raster of one date, aligned.
#[derive(Clone, Debug)]
pub struct DayRasters {
    pub date: NaiveDate,
    pub terra: RasterGrid,
    pub aqua: RasterGrid,
    pub qa: RasterGrid,
    /// In [`MET_BANDS`] order.
    pub met: Vec<RasterGrid>,
}

impl DayRasters {
    /// Loads every band of a date. `Ok(Err(missing))` lists absent files.
    pub fn load(cfg: &PipelineConfig, date: NaiveDate) -> Result<std::result::Result<DayRasters, Vec<String>>> {
        let bands: Vec<&str> = [AOD_TERRA, AOD_AQUA, QA_BAND].into_iter().chain(MET_BANDS).collect();
        let missing: Vec<String> = bands
            .iter()
            .filter(|b| !band_path(&cfg.band_dir(b), b, date).is_file())
            .map(|b| b.to_string())
            .collect();
        if !missing.is_empty() {
            return Ok(Err(missing));
        }
        let read = |b: &str| -> Result<RasterGrid> {
            let p = band_path(&cfg.band_dir(b), b, date);
            let mut g = RasterGrid::read_ascii(&p)
                .map_err(|e| PipelineError::Data(format!("{}: {e}", p.display())))?;
            g.band = b.to_string();
            Ok(g)
        };
        let day = DayRasters {
            date,
            terra: read(AOD_TERRA)?,
            aqua: read(AOD_AQUA)?,
            qa: read(QA_BAND)?,
            met: MET_BANDS.iter().map(|b| read(b)).collect::<Result<_>>()?,
        };
        for g in [&day.aqua, &day.qa].into_iter().chain(&day.met) {
            if !g.is_aligned_with(&day.terra) {
                return Err(PipelineError::Data(format!(
                    "raster {} on {date} is not aligned with {AOD_TERRA}",
                    g.band
                )));
            }
        }
        Ok(Ok(day))
    }

    /// Terra and Aqua grids, QA-masked when `strict`.
    pub fn aod_grids(&self, strict: bool) -> Result<(RasterGrid, RasterGrid)> {
        if strict {
            Ok((mask_by_qa(&self.terra, &self.qa)?, mask_by_qa(&self.aqua, &self.qa)?))
        } else {
            Ok((self.terra.clone(), self.aqua.clone()))
        }
    }
}

/// Feature schema, with `nAOD` in the first slot when normalising.
pub fn feature_schema(normalize_aod: bool) -> FeatureSchema {
    let standard = FeatureSchema::standard();
    if !normalize_aod {
        return standard;
    }
    let mut names = standard.names().to_vec();
    let mut units = standard.units().to_vec();
    names[0] = NAOD_NAME.into();
    units[0] = "1/m".into();
    FeatureSchema::new(names, units).expect("valid schema")
}

/// Feature vector in schema order; `None` when `nAOD` is undefined.
pub fn assemble_features(
    aod: f64,
    u: f64,
    lat: f64,
    lon: f64,
    met: &[f64; 9],
    date: NaiveDate,
    normalize_aod: bool,
) -> Option<Vec<f64>> {
    let first = if normalize_aod {
        normalize_aod_pblh(aod, met[PBLH_INDEX])?
    } else {
        aod
    };
    let mut f = Vec::with_capacity(FEATURE_NAMES.len());
    f.extend([first, u, lat, lon]);
    f.extend_from_slice(met);
    f.push(date.ordinal() as f64);
    Some(f)
}

/// Fallback used when no collocated pairs exist: a single sensor stands in
/// for the other unchanged.
fn identity_regression() -> SensorRegression {
    let id = LinearFit {
        slope: 1.0,
        intercept: 0.0,
        r2: 0.0,
        n: 0,
    };
    SensorRegression {
        aqua_to_terra: id,
        terra_to_aqua: id,
    }
}

/// Every `ceil(n / cap)`-th point.
pub fn thin_points(points: &[(f64, f64, f64)], cap: usize) -> Vec<(f64, f64, f64)> {
    if points.len() <= cap {
        return points.to_vec();
    }
    let step = points.len().div_ceil(cap);
    points.iter().step_by(step).copied().collect()
}

fn fit_kind(points: &[(f64, f64, f64)], kind: VariogramKind) -> aodforest::Result<VariogramModel> {
    let bins = empirical_variogram(points, DEFAULT_BINS, default_max_dist(points))?;
    fit_variogram(&bins, kind)
}

#[derive(Clone, Debug, Serialize)]
struct VariogramRow {
    band: String,
    date: NaiveDate,
    kind: &'static str,
    nugget: f64,
    psill: f64,
    range: f64,
    n_points: usize,
}

/// Per-band variogram kind, chosen once on the first date the band is used.
struct MetKriger<'a> {
    cfg: &'a PipelineConfig,
    seed: u64,
    kinds: Vec<Option<VariogramKind>>,
    rows: Vec<VariogramRow>,
}

impl MetKriger<'_> {
    /// Kriged value of every band at each target `(lon, lat)`; `None` for a
    /// band where kriging failed.
    fn krige_day(&mut self, day: &DayRasters, targets: &[(f64, f64)], log: &mut RunLog) -> Result<Vec<Vec<Option<f64>>>> {
        let pp = &self.cfg.preprocess;
        let mut out = vec![vec![None; MET_BANDS.len()]; targets.len()];
        for (b, grid) in day.met.iter().enumerate() {
            let points = grid.valid_points();
            if points.is_empty() {
                continue;
            }
            let capped = thin_points(&points, pp.max_variogram_points);
            if self.kinds[b].is_none() {
                match kriging_grid_search(
                    &capped,
                    &pp.variogram_kinds,
                    pp.kriging_folds,
                    Some(pp.kriging_neighbours),
                    rng::derive_seed(self.seed, &[0x4B, b as u64]),
                ) {
                    Ok(sel) => {
                        log.record(
                            "variogram_selection",
                            json!({"band": MET_BANDS[b], "date": day.date, "kind": sel.kind, "scores": sel.scores}),
                        )?;
                        self.kinds[b] = Some(sel.kind);
                    }
                    Err(e) => {
                        log.record(
                            "variogram_selection_failed",
                            json!({"band": MET_BANDS[b], "date": day.date, "error": e.to_string()}),
                        )?;
                        continue;
                    }
                }
            }
            let kind = self.kinds[b].expect("kind selected above");
            let model = match fit_kind(&capped, kind) {
                Ok(m) => m,
                Err(e) => {
                    log.record("variogram_fit_failed", json!({"band": MET_BANDS[b], "date": day.date, "error": e.to_string()}))?;
                    continue;
                }
            };
            self.rows.push(VariogramRow {
                band: MET_BANDS[b].into(),
                date: day.date,
                kind: kind.name(),
                nugget: model.nugget,
                psill: model.psill,
                range: model.range,
                n_points: capped.len(),
            });
            match krige_predict_local(&points, &model, targets, pp.kriging_neighbours) {
                Ok(pred) => {
                    for (t, p) in pred.into_iter().enumerate() {
                        out[t][b] = Some(p.0);
                    }
                }
                Err(e) => {
                    log.record("kriging_failed", json!({"band": MET_BANDS[b], "date": day.date, "error": e.to_string()}))?;
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GateCounts {
    pub rows_in: usize,
    pub rows_out: usize,
    pub dropped: BTreeMap<&'static str, usize>,
}

impl GateCounts {
    fn drop(&mut self, gate: &'static str) {
        debug_assert!(GATES.contains(&gate));
        *self.dropped.get_mut(gate).expect("known gate") += 1;
    }

    pub fn is_balanced(&self) -> bool {
        self.rows_in == self.rows_out + self.dropped.values().sum::<usize>()
    }
}

#[derive(Clone, Debug)]
pub struct PrepareOutcome {
    pub dataset: Dataset,
    pub counts: GateCounts,
    pub regression: SensorRegression,
    pub log: RunLog,
}

struct Candidate {
    station: usize,
    pm: f64,
}

/// Runs the preparation chain and writes the dataset, the run log, the
/// variogram table and the sensor regression into the output directory.
pub fn prepare(cfg: &PipelineConfig) -> Result<PrepareOutcome> {
    cfg.validate(true)?;
    let seed = cfg.seed.unwrap_or(0);
    let out_dir = cfg.output_dir();
    std::fs::create_dir_all(&out_dir).map_err(|e| PipelineError::io(&out_dir, e))?;
    let mut log = RunLog::new();
    let in_range = |d: &NaiveDate| {
        cfg.data.start_date.is_none_or(|s| *d >= s) && cfg.data.end_date.is_none_or(|e| *d <= e)
    };

    let table = read_station_csv(cfg.stations_path()).map_err(|e| PipelineError::Data(format!("station file: {e}")))?;
    log.record(
        "stations",
        json!({
            "stations": table.stations.len(),
            "hourly_rows": table.stations.iter().map(|s| s.readings.len()).sum::<usize>(),
            "rh_converted_from_fraction": table.rh_converted_from_fraction,
        }),
    )?;

    let mut counts = GateCounts {
        dropped: GATES.iter().map(|g| (*g, 0)).collect(),
        ..GateCounts::default()
    };
    let (mut kept, mut missing, mut rejected) = (0, 0, 0);
    let mut by_date: BTreeMap<NaiveDate, Vec<Candidate>> = BTreeMap::new();
    for (si, st) in table.stations.iter().enumerate() {
        let (corrected, c) = correct_series(st);
        kept += c.kept;
        missing += c.missing;
        rejected += c.rejected;
        let daily = daily_average(&corrected);
        let days: Vec<(NaiveDate, Option<f64>)> = daily.days.into_iter().filter(|(d, _)| in_range(d)).collect();
        counts.rows_in += days.len();
        let valid: Vec<(NaiveDate, f64)> = days
            .iter()
            .filter_map(|&(d, v)| match v {
                Some(v) => Some((d, v)),
                None => {
                    counts.drop("no_valid_pm");
                    None
                }
            })
            .collect();
        let values: Vec<f64> = valid.iter().map(|v| v.1).collect();
        for ((d, pm), keep) in valid.into_iter().zip(iqr_inlier_mask(&values)) {
            if keep {
                by_date.entry(d).or_default().push(Candidate { station: si, pm });
            } else {
                counts.drop("iqr_outlier");
            }
        }
    }
    log.record(
        "humidity_correction",
        json!({"kept": kept, "missing": missing, "rejected_rh": rejected}),
    )?;

    // load every candidate date once; the regression needs all of them
    let mut days: BTreeMap<NaiveDate, DayRasters> = BTreeMap::new();
    let mut pairs = Vec::new();
    for (&date, cands) in &by_date {
        match DayRasters::load(cfg, date)? {
            Ok(day) => {
                let (t, a) = day.aod_grids(cfg.preprocess.strict_qa)?;
                for (tv, av) in t.values().iter().zip(a.values()) {
                    if let (Some(tv), Some(av)) = (tv, av) {
                        pairs.push((*tv, *av));
                    }
                }
                days.insert(date, day);
            }
            Err(missing) => {
                log.record("missing_raster", json!({"date": date, "bands": missing, "station_days": cands.len()}))?;
            }
        }
    }
    let regression = match fit_sensor_regression(&pairs) {
        Ok(r) => r,
        Err(e) => {
            log.record("sensor_regression_fallback", json!({"pairs": pairs.len(), "error": e.to_string()}))?;
            identity_regression()
        }
    };
    log.record("sensor_regression", &regression)?;

    let schema = feature_schema(cfg.preprocess.normalize_aod);
    let mut kriger = MetKriger {
        cfg,
        seed,
        kinds: vec![None; MET_BANDS.len()],
        rows: Vec::new(),
    };
    let mut rows = Vec::new();
    for (date, cands) in &by_date {
        let Some(day) = days.get(date) else {
            cands.iter().for_each(|_| counts.drop("missing_raster"));
            continue;
        };
        let (t, a) = day.aod_grids(cfg.preprocess.strict_qa)?;
        let merged = merge_aod_grids(&a, &t, &regression)?;
        let mut survivors = Vec::new();
        for c in cands {
            let st = &table.stations[c.station];
            let Some((row, col)) = merged.locate(st.lat, st.lon) else {
                counts.drop("outside_grid");
                continue;
            };
            let w = extract_window_at(&merged, row, col);
            match w.rejection() {
                Some(WindowRejection::TooFewValid) => counts.drop("window_too_few_valid"),
                Some(WindowRejection::TooVariable) => counts.drop("window_too_variable"),
                None => survivors.push((c, w.aod.expect("passing window has a mean"), uncertainty_at(&day.qa, row, col))),
            }
        }
        if survivors.is_empty() {
            continue;
        }
        let targets: Vec<(f64, f64)> = survivors
            .iter()
            .map(|(c, ..)| (table.stations[c.station].lon, table.stations[c.station].lat))
            .collect();
        let met = kriger.krige_day(day, &targets, &mut log)?;
        for ((c, aod, u), met) in survivors.into_iter().zip(met) {
            let Some(met) = met.into_iter().collect::<Option<Vec<f64>>>() else {
                counts.drop("met_kriging_failed");
                continue;
            };
            let st = &table.stations[c.station];
            let met: [f64; 9] = met.try_into().expect("nine bands");
            let Some(features) = assemble_features(aod, u, st.lat, st.lon, &met, *date, cfg.preprocess.normalize_aod)
            else {
                counts.drop("pblh_invalid");
                continue;
            };
            let mut s = Sample::new(features, Some(c.pm));
            s.station_id = Some(st.station_id.clone());
            s.date = Some(*date);
            rows.push(s);
        }
    }
    counts.rows_out = rows.len();
    log.record("accounting", &counts)?;
    debug_assert!(counts.is_balanced());

    log.write(&out_dir.join(PREPARE_LOG_FILE))?;
    write_variograms(&out_dir.join(VARIOGRAM_FILE), &kriger.rows)?;
    write_json(&out_dir.join(REGRESSION_FILE), &regression)?;
    if rows.is_empty() {
        return Err(PipelineError::Data(format!(
            "prepared dataset is empty; see {}",
            out_dir.join(PREPARE_LOG_FILE).display()
        )));
    }
    let dataset = Dataset::with_rows(schema, rows)?;
    dataset.write_csv(out_dir.join(DATASET_FILE))?;
    Ok(PrepareOutcome {
        dataset,
        counts,
        regression,
        log,
    })
}

fn write_variograms(path: &Path, rows: &[VariogramRow]) -> Result<()> {
    aodforest::raster::write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        for r in rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    })?;
    Ok(())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    aodforest::raster::write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        std::io::Write::write_all(w, b"\n")?;
        Ok(())
    })?;
    Ok(())
}

/// The regression written by `prepare`, if present.
pub fn read_regression(path: &Path) -> Result<Option<SensorRegression>> {
    if !path.is_file() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(Some(serde_json::from_str(&text)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thinning_caps_points() {
        let pts: Vec<_> = (0..1000).map(|i| (i as f64, 0.0, 0.0)).collect();
        let t = thin_points(&pts, 600);
        assert!(t.len() <= 600);
        assert_eq!(t[1].0, 2.0);
        assert_eq!(thin_points(&pts[..10], 600).len(), 10);
    }

    #[test]
    fn features_in_schema_order() {
        let met = [290.0, 280.0, 500.0, 0.8, 0.2, 2.0, 1.0, 60000.0, 0.5];
        let d = NaiveDate::from_ymd_opt(2018, 2, 1).unwrap();
        let f = assemble_features(0.2, 1.0, 35.7, 51.4, &met, d, false).unwrap();
        assert_eq!(f.len(), 14);
        assert_eq!(f[0], 0.2);
        assert_eq!(f[6], 500.0);
        assert_eq!(f[13], 32.0);
        let n = assemble_features(0.2, 1.0, 35.7, 51.4, &met, d, true).unwrap();
        assert_eq!(n[0], 0.2 / 500.0);
        let mut bad = met;
        bad[PBLH_INDEX] = 0.0;
        assert!(assemble_features(0.2, 1.0, 35.7, 51.4, &bad, d, true).is_none());
        assert_eq!(feature_schema(true).names()[0], NAOD_NAME);
    }
}
