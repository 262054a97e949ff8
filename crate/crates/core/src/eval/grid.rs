use std::fmt;
use std::io::Write;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::compute_metrics;
use crate::data::kfold_indices;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl ParamValue {
    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            ParamValue::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            ParamValue::Int(v) => Some(v as f64),
            ParamValue::Float(v) => Some(v),
            ParamValue::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Float(v) => write!(f, "{v}"),
            ParamValue::Text(s) => f.write_str(s),
        }
    }
}

/// One grid cell: `(axis name, value)` pairs in axis declaration order.
pub type Params = Vec<(String, ParamValue)>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub name: String,
    pub values: Vec<ParamValue>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    #[default]
    Rmse,
    Mae,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<GridAxis>,
    pub folds: usize,
    #[serde(default)]
    pub scoring: Scoring,
}

impl GridSpec {
    pub fn new(axes: Vec<GridAxis>, folds: usize) -> Self {
        GridSpec {
            axes,
            folds,
            scoring: Scoring::Rmse,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::InvalidArgument("grid has no axes".into()));
        }
        for a in &self.axes {
            if a.values.is_empty() {
                return Err(Error::InvalidArgument(format!("grid axis {:?} has no values", a.name)));
            }
            if a.values.iter().any(|v| matches!(v, ParamValue::Float(f) if !f.is_finite())) {
                return Err(Error::NonFinite(format!("grid axis {:?}", a.name)));
            }
        }
        Ok(())
    }

    /// All cells, axes in declaration order with the last axis varying fastest.
    pub fn cells(&self) -> Vec<Params> {
        let mut cells: Vec<Params> = vec![Vec::new()];
        for axis in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push((axis.name.clone(), v.clone()));
                        p
                    })
                })
                .collect();
        }
        cells
    }
}

/// A model family trainable from hyperparameters. `fit_predict` fits on the
/// training block and returns predictions for the validation block.
pub trait ModelFamily: Sync {
    fn fit_predict(
        &self,
        params: &Params,
        x_train: &Array2<f64>,
        y_train: &[f64],
        x_valid: &Array2<f64>,
        seed: u64,
    ) -> Result<Vec<f64>>;
}

impl<F> ModelFamily for F
where
    F: Fn(&Params, &Array2<f64>, &[f64], &Array2<f64>, u64) -> Result<Vec<f64>> + Sync,
{
    fn fit_predict(
        &self,
        params: &Params,
        x_train: &Array2<f64>,
        y_train: &[f64],
        x_valid: &Array2<f64>,
        seed: u64,
    ) -> Result<Vec<f64>> {
        self(params, x_train, y_train, x_valid, seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvRow {
    pub params: Params,
    /// Per-fold validation score; empty for an invalid cell.
    pub fold_scores: Vec<f64>,
    pub mean_score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvTable {
    pub axis_names: Vec<String>,
    pub folds: usize,
    pub scoring: Scoring,
    pub rows: Vec<CvRow>,
}

impl CvTable {
    /// Index of the lowest mean score; ties keep the earliest cell.
    pub fn best_index(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, row) in self.rows.iter().enumerate() {
            if let Some(s) = row.mean_score {
                if best.is_none_or(|(_, b)| s < b) {
                    best = Some((i, s));
                }
            }
        }
        best.map(|(i, _)| i)
    }

    /// CSV with one row per cell: axis values, `fold_1..fold_k`, `mean_<score>`.
    /// Invalid cells leave the score fields empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let metric = match self.scoring {
            Scoring::Rmse => "rmse",
            Scoring::Mae => "mae",
        };
        let mut out = csv::Writer::from_writer(w);
        let mut header = self.axis_names.clone();
        header.extend((1..=self.folds).map(|k| format!("fold_{k}")));
        header.push(format!("mean_{metric}"));
        out.write_record(&header)?;
        for row in &self.rows {
            let mut rec: Vec<String> = row.params.iter().map(|(_, v)| v.to_string()).collect();
            if row.mean_score.is_some() {
                rec.extend(row.fold_scores.iter().map(|s| s.to_string()));
            } else {
                rec.extend(std::iter::repeat_n(String::new(), self.folds));
            }
            rec.push(row.mean_score.map(|s| s.to_string()).unwrap_or_default());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// k-fold cross-validated grid search.
///
/// Every cell sees the same folds and the same per-fold seed. Cells and folds
/// are evaluated in parallel and reassembled in grid order. A cell with any
/// failing fold is marked invalid and never selected.
pub fn grid_search<M: ModelFamily>(
    x: &Array2<f64>,
    y: &[f64],
    family: &M,
    grid: &GridSpec,
    seed: u64,
) -> Result<(Params, CvTable)> {
    grid.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::dim("grid search targets", x.nrows(), y.len()));
    }
    let folds = kfold_indices(x.nrows(), grid.folds, seed)?;
    let fold_data: Vec<_> = folds
        .iter()
        .map(|(train, valid)| {
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let yv: Vec<f64> = valid.iter().map(|&i| y[i]).collect();
            (x.select(Axis(0), train), yt, x.select(Axis(0), valid), yv)
        })
        .collect();
    let cells = grid.cells();
    let k = folds.len();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..k).map(move |f| (c, f))).collect();
    let scores: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let (xt, yt, xv, yv) = &fold_data[f];
            let pred = family.fit_predict(&cells[c], xt, yt, xv, rng::derive_seed(seed, &[f as u64]))?;
            if pred.len() != yv.len() {
                return Err(Error::dim("fold predictions", yv.len(), pred.len()));
            }
            if yv.len() < 2 {
                let r = (pred[0] - yv[0]).abs();
                return Ok(r);
            }
            let m = compute_metrics(yv, &pred)?;
            Ok(match grid.scoring {
                Scoring::Rmse => m.rmse,
                Scoring::Mae => m.mae,
            })
        })
        .collect();

    let mut rows = Vec::with_capacity(cells.len());
    let mut it = scores.into_iter();
    for params in cells {
        let fold_results: Vec<Result<f64>> = it.by_ref().take(k).collect();
        let mut fold_scores = Vec::with_capacity(k);
        let mut error = None;
        for r in fold_results {
            match r {
                Ok(s) => fold_scores.push(s),
                Err(e) => {
                    error.get_or_insert_with(|| e.to_string());
                }
            }
        }
        let mean_score = match &error {
            None => Some(fold_scores.iter().sum::<f64>() / k as f64),
            Some(e) => {
                log::warn!("grid cell {} excluded: {e}", describe(&params));
                fold_scores.clear();
                None
            }
        };
        rows.push(CvRow {
            params,
            fold_scores,
            mean_score,
            error,
        });
    }
    let table = CvTable {
        axis_names: grid.axes.iter().map(|a| a.name.clone()).collect(),
        folds: k,
        scoring: grid.scoring,
        rows,
    };
    let best = table
        .best_index()
        .ok_or_else(|| Error::InvalidArgument("every grid cell failed".into()))?;
    Ok((table.rows[best].params.clone(), table))
}

fn describe(params: &Params) -> String {
    params
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(",")
}
