//! Held-out metrics in original units, per station, plus the prediction series.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use aodforest::data::Dataset;
use aodforest::eval::{compute_metrics, MetricsReport};
use serde::Serialize;

use crate::error::{PipelineError, Result};
use crate::model::ModelBundle;

pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_TXT: &str = "metrics.txt";
pub const STATION_METRICS_CSV: &str = "metrics_by_station.csv";
pub const PREDICTIONS_CSV: &str = "predictions.csv";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictionRow {
    pub station_id: String,
    pub date: String,
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub overall: MetricsReport,
    /// `None` where a station has too few rows for metrics.
    pub by_station: BTreeMap<String, Option<MetricsReport>>,
    pub predictions: Vec<PredictionRow>,
}

/// Scores `bundle` on the complete rows of `data`.
pub fn evaluate_dataset(bundle: &ModelBundle, data: &Dataset) -> Result<Evaluation> {
    if data.schema().names() != bundle.schema.names() {
        return Err(PipelineError::Data(format!(
            "schema mismatch: model expects {:?}, dataset has {:?}",
            bundle.schema.names(),
            data.schema().names()
        )));
    }
    let data = data.complete_rows();
    if data.is_empty() {
        return Err(PipelineError::Data("no complete rows to evaluate".into()));
    }
    let y = data.targets()?;
    let pred = bundle.predict(&data.feature_matrix())?;
    let overall = compute_metrics(&y, &pred)?;
    let predictions: Vec<PredictionRow> = data
        .rows()
        .iter()
        .zip(y.iter().zip(&pred))
        .map(|(s, (&a, &p))| PredictionRow {
            station_id: s.station_id.clone().unwrap_or_default(),
            date: s.date.map(|d| d.to_string()).unwrap_or_default(),
            actual: a,
            predicted: p,
        })
        .collect();
    let mut groups: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in &predictions {
        let g = groups.entry(r.station_id.clone()).or_default();
        g.0.push(r.actual);
        g.1.push(r.predicted);
    }
    let by_station = groups
        .into_iter()
        .map(|(k, (a, p))| (k, compute_metrics(&a, &p).ok()))
        .collect();
    Ok(Evaluation {
        overall,
        by_station,
        predictions,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn metric_fields(m: &MetricsReport) -> [String; 5] {
    [m.n.to_string(), m.rmse.to_string(), m.mae.to_string(), opt(m.r2), opt(m.ape)]
}

/// Loads the bundle and dataset, evaluates and writes the metric files into `out_dir`.
pub fn evaluate(model: &Path, dataset: &Path, out_dir: &Path) -> Result<Evaluation> {
    let bundle = ModelBundle::load(model)?;
    let data = Dataset::read_csv(dataset).map_err(|e| PipelineError::Data(format!("{}: {e}", dataset.display())))?;
    let ev = evaluate_dataset(&bundle, &data)?;
    std::fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;

    let header = ["scope", "n", "rmse", "mae", "r2", "ape"];
    aodforest::raster::write_atomic(&out_dir.join(METRICS_CSV), |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(header)?;
        let mut rec = vec!["all".to_string()];
        rec.extend(metric_fields(&ev.overall));
        out.write_record(&rec)?;
        out.flush()?;
        Ok(())
    })?;
    aodforest::raster::write_atomic(&out_dir.join(STATION_METRICS_CSV), |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(header)?;
        for (station, m) in &ev.by_station {
            let mut rec = vec![station.clone()];
            match m {
                Some(m) => rec.extend(metric_fields(m)),
                None => rec.extend(std::iter::repeat_n(String::new(), 5)),
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    })?;
    aodforest::raster::write_atomic(&out_dir.join(PREDICTIONS_CSV), |w| {
        let mut out = csv::Writer::from_writer(w);
        for r in &ev.predictions {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    })?;

    let m = &ev.overall;
    let mut text = String::new();
    let _ = writeln!(text, "model      {} ({})", model.display(), bundle.family());
    let _ = writeln!(text, "dataset    {}", dataset.display());
    let _ = writeln!(text, "rows       {}", m.n);
    let _ = writeln!(text, "RMSE       {:.4} ug/m3", m.rmse);
    let _ = writeln!(text, "MAE        {:.4} ug/m3", m.mae);
    let _ = writeln!(text, "R2         {}", m.r2.map_or("n/a (constant series)".into(), |v| format!("{v:.4}")));
    let _ = writeln!(text, "APE        {}", m.ape.map_or("n/a".into(), |v| format!("{:.2}%", 100.0 * v)));
    aodforest::raster::write_atomic(&out_dir.join(METRICS_TXT), |w| {
        std::io::Write::write_all(w, text.as_bytes())?;
        Ok(())
    })?;
    Ok(ev)
}
