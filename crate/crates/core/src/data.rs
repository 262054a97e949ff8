//! Feature schema, tabular dataset, min-max scaling and splitting.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Model inputs in canonical order.
pub const FEATURE_NAMES: [&str; 14] = [
    "AOD", "U", "Lat", "Long", "T", "DT", "PBLH", "SP", "LAI", "WS", "WD", "UV", "RH", "DOY",
];

const FEATURE_UNITS: [&str; 14] = [
    "unitless", "fraction", "deg", "deg", "K", "K", "m", "unitless", "unitless", "m/s", "rad",
    "unitless", "fraction", "day",
];

pub const TARGET_COLUMN: &str = "PM25";
pub const STATION_COLUMN: &str = "station_id";
pub const DATE_COLUMN: &str = "date";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    names: Vec<String>,
    units: Vec<String>,
}

impl FeatureSchema {
    /// The fourteen-feature AOD/meteorology schema.
    pub fn standard() -> Self {
        FeatureSchema {
            names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            units: FEATURE_UNITS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn new(names: Vec<String>, units: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Empty("feature schema".into()));
        }
        if names.len() != units.len() {
            return Err(Error::dim("schema units", names.len(), units.len()));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name {n:?}")));
            }
            if [TARGET_COLUMN, STATION_COLUMN, DATE_COLUMN].contains(&n.as_str()) {
                return Err(Error::Schema(format!("reserved column name {n:?}")));
            }
        }
        Ok(FeatureSchema { names, units })
    }

    /// Schema with the given names and unitless units.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        let units = vec!["unitless".to_string(); names.len()];
        Self::new(names, units)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn is_standard(&self) -> bool {
        self.names.iter().map(String::as_str).eq(FEATURE_NAMES.iter().copied())
    }
}

/// One row. Missing feature values are stored as NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub target: Option<f64>,
    pub station_id: Option<String>,
    pub date: Option<NaiveDate>,
}

impl Sample {
    pub fn new(features: Vec<f64>, target: Option<f64>) -> Self {
        Sample {
            features,
            target,
            station_id: None,
            date: None,
        }
    }

    /// True when every feature and the target are present and finite.
    pub fn is_complete(&self) -> bool {
        self.features.iter().all(|v| v.is_finite()) && self.target.is_some_and(f64::is_finite)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    rows: Vec<Sample>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema) -> Self {
        Dataset {
            schema,
            rows: Vec::new(),
        }
    }

    pub fn with_rows(schema: FeatureSchema, rows: Vec<Sample>) -> Result<Self> {
        let mut ds = Dataset::new(schema);
        for r in rows {
            ds.push(r)?;
        }
        Ok(ds)
    }

    /// Builds a dataset from a feature matrix and target vector.
    pub fn from_matrix(schema: FeatureSchema, x: &Array2<f64>, y: &[f64]) -> Result<Self> {
        if x.ncols() != schema.len() {
            return Err(Error::dim("feature matrix columns", schema.len(), x.ncols()));
        }
        if x.nrows() != y.len() {
            return Err(Error::dim("target length", x.nrows(), y.len()));
        }
        let rows = x
            .rows()
            .into_iter()
            .zip(y)
            .map(|(r, &t)| Sample::new(r.to_vec(), Some(t)))
            .collect();
        Ok(Dataset { schema, rows })
    }

    pub fn push(&mut self, sample: Sample) -> Result<()> {
        if sample.features.len() != self.schema.len() {
            return Err(Error::dim(
                "sample features",
                self.schema.len(),
                sample.features.len(),
            ));
        }
        self.rows.push(sample);
        Ok(())
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Sample] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Row-major feature matrix. Missing values stay NaN.
    pub fn feature_matrix(&self) -> Array2<f64> {
        let d = self.schema.len();
        let mut x = Array2::zeros((self.rows.len(), d));
        for (mut dst, s) in x.rows_mut().into_iter().zip(&self.rows) {
            for (o, v) in dst.iter_mut().zip(&s.features) {
                *o = *v;
            }
        }
        x
    }

    pub fn targets(&self) -> Result<Vec<f64>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.target
                    .ok_or_else(|| Error::Missing(format!("target of row {i}")))
            })
            .collect()
    }

    /// Feature matrix and targets, rejecting rows with missing or non-finite values.
    pub fn training_arrays(&self) -> Result<(Array2<f64>, Vec<f64>)> {
        if self.rows.is_empty() {
            return Err(Error::Empty("dataset".into()));
        }
        if let Some(i) = self.rows.iter().position(|s| !s.is_complete()) {
            return Err(Error::NonFinite(format!("training row {i}")));
        }
        Ok((self.feature_matrix(), self.targets()?))
    }

    /// Keeps only complete rows.
    pub fn complete_rows(&self) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: self.rows.iter().filter(|s| s.is_complete()).cloned().collect(),
        }
    }

    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::from_csv_reader(f)
    }

    /// Reads `<features...>,PM25[,station_id][,date]`. Empty fields are missing.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr.headers()?.clone();
        let col = |name: &str| header.iter().position(|h| h == name);
        let target_col = col(TARGET_COLUMN)
            .ok_or_else(|| Error::Schema(format!("missing {TARGET_COLUMN} column")))?;
        let station_col = col(STATION_COLUMN);
        let date_col = col(DATE_COLUMN);
        let feature_cols: Vec<usize> = (0..header.len())
            .filter(|&i| i != target_col && Some(i) != station_col && Some(i) != date_col)
            .collect();
        let names: Vec<String> = feature_cols.iter().map(|&i| header[i].to_string()).collect();
        let schema = if names.iter().map(String::as_str).eq(FEATURE_NAMES.iter().copied()) {
            FeatureSchema::standard()
        } else {
            FeatureSchema::from_names(&names)?
        };

        let mut ds = Dataset::new(schema);
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<Option<f64>> {
                let s = rec.get(i).unwrap_or("").trim();
                if s.is_empty() {
                    return Ok(None);
                }
                s.parse::<f64>().map(Some).map_err(|_| {
                    Error::Format(format!("row {}: bad number {s:?} in {}", line + 1, &header[i]))
                })
            };
            let features = feature_cols
                .iter()
                .map(|&i| parse(i).map(|v| v.unwrap_or(f64::NAN)))
                .collect::<Result<Vec<_>>>()?;
            let target = parse(target_col)?;
            let station_id = station_col
                .and_then(|i| rec.get(i))
                .filter(|s| !s.is_empty())
                .map(str::to_string);
            let date = match date_col.and_then(|i| rec.get(i)).filter(|s| !s.is_empty()) {
                Some(s) => Some(NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| {
                    Error::Format(format!("row {}: bad date {s:?}", line + 1))
                })?),
                None => None,
            };
            ds.push(Sample {
                features,
                target,
                station_id,
                date,
            })?;
        }
        Ok(ds)
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.to_csv_writer(std::io::BufWriter::new(f))
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.schema.names.iter().map(String::as_str).collect();
        header.extend([TARGET_COLUMN, STATION_COLUMN, DATE_COLUMN]);
        w.write_record(&header)?;
        let fmt = |v: f64| {
            if v.is_finite() {
                format!("{v}")
            } else {
                String::new()
            }
        };
        for s in &self.rows {
            let mut rec: Vec<String> = s.features.iter().map(|&v| fmt(v)).collect();
            rec.push(s.target.map(fmt).unwrap_or_default());
            rec.push(s.station_id.clone().unwrap_or_default());
            rec.push(s.date.map(|d| d.format("%Y-%m-%d").to_string()).unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-feature min-max scaler with optional target bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub feature_names: Vec<String>,
    pub feature_min: Vec<f64>,
    pub feature_max: Vec<f64>,
    /// Features whose observed max equals min. They scale to 0.
    pub degenerate: Vec<bool>,
    pub target_bounds: Option<(f64, f64)>,
}

fn finite_extrema(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values
        .filter(|v| v.is_finite())
        .fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
}

impl MinMaxScaler {
    pub fn fit(data: &Dataset, include_target: bool) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("dataset".into()));
        }
        let d = data.schema().len();
        let mut feature_min = Vec::with_capacity(d);
        let mut feature_max = Vec::with_capacity(d);
        for j in 0..d {
            let (lo, hi) = finite_extrema(data.rows().iter().map(|s| s.features[j]))
                .ok_or_else(|| {
                    Error::Empty(format!("no finite values for feature {}", data.schema().names()[j]))
                })?;
            feature_min.push(lo);
            feature_max.push(hi);
        }
        let target_bounds = if include_target {
            let b = finite_extrema(data.rows().iter().filter_map(|s| s.target))
                .ok_or_else(|| Error::Empty("no finite target values".into()))?;
            Some(b)
        } else {
            None
        };
        let degenerate = feature_min
            .iter()
            .zip(&feature_max)
            .map(|(lo, hi)| lo == hi)
            .collect::<Vec<_>>();
        for (j, deg) in degenerate.iter().enumerate() {
            if *deg {
                log::warn!(
                    "feature {} is constant ({}); it will scale to 0",
                    data.schema().names()[j],
                    feature_min[j]
                );
            }
        }
        Ok(MinMaxScaler {
            feature_names: data.schema().names().to_vec(),
            feature_min,
            feature_max,
            degenerate,
            target_bounds,
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_min.len()
    }

    pub fn has_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }

    #[inline]
    pub fn scale_value(&self, j: usize, v: f64) -> f64 {
        if self.degenerate[j] {
            if v.is_nan() {
                v
            } else {
                0.0
            }
        } else {
            (v - self.feature_min[j]) / (self.feature_max[j] - self.feature_min[j])
        }
    }

    pub fn invert_value(&self, j: usize, v: f64) -> f64 {
        if self.degenerate[j] {
            self.feature_min[j]
        } else {
            self.feature_min[j] + v * (self.feature_max[j] - self.feature_min[j])
        }
    }

    fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        if schema.names() != self.feature_names.as_slice() {
            return Err(Error::Schema(format!(
                "scaler fitted on {:?}, data has {:?}",
                self.feature_names,
                schema.names()
            )));
        }
        Ok(())
    }

    /// Scales features (and the target when bounds are present). Values
    /// outside the fitted range are not clipped.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        self.check_schema(data.schema())?;
        let rows = data
            .rows()
            .iter()
            .map(|s| Sample {
                features: s
                    .features
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| self.scale_value(j, v))
                    .collect(),
                target: match (s.target, self.target_bounds) {
                    (Some(t), Some(_)) => Some(self.scale_target(t).expect("bounds present")),
                    (t, None) => t,
                    (None, _) => None,
                },
                station_id: s.station_id.clone(),
                date: s.date,
            })
            .collect();
        Ok(Dataset {
            schema: data.schema().clone(),
            rows,
        })
    }

    /// Scales a row-major matrix in place of a copy.
    pub fn transform_matrix(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::dim("scaler input columns", self.n_features(), x.ncols()));
        }
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.scale_value(j, *v);
            }
        }
        Ok(out)
    }

    fn target_range(&self) -> Result<(f64, f64)> {
        self.target_bounds
            .ok_or_else(|| Error::Missing("scaler was fitted without target bounds".into()))
    }

    pub fn scale_target(&self, y: f64) -> Result<f64> {
        let (lo, hi) = self.target_range()?;
        Ok(if hi == lo { 0.0 } else { (y - lo) / (hi - lo) })
    }

    pub fn invert_target(&self, scaled: f64) -> Result<f64> {
        let (lo, hi) = self.target_range()?;
        Ok(lo + scaled * (hi - lo))
    }

    /// Width of the target range; residuals on the scaled axis multiply by this.
    pub fn target_span(&self) -> Result<f64> {
        let (lo, hi) = self.target_range()?;
        Ok(hi - lo)
    }
}

/// Shuffles rows with a seeded stream and cuts them into train/test.
///
/// The training part receives `floor(n * train_fraction)` rows, clamped to
/// `1..=n-1` so neither side is empty.
pub fn split_train_test(
    data: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = data.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 rows to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, &[0x5B11]));
    let n_train = ((n as f64 * train_fraction + 1e-9).floor() as usize).clamp(1, n - 1);
    Ok((data.subset(&idx[..n_train]), data.subset(&idx[n_train..])))
}

/// One fold: sorted training indices and sorted validation indices.
pub type Fold = (Vec<usize>, Vec<usize>);

/// Seeded k-fold partition of `0..n`. The first `n % k` folds receive one
/// extra validation index.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds n = {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, &[0xF01D]));
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut valid = idx[start..start + size].to_vec();
        valid.sort_unstable();
        let mut train: Vec<usize> = idx[..start].iter().chain(&idx[start + size..]).copied().collect();
        train.sort_unstable();
        folds.push((train, valid));
        start += size;
    }
    Ok(folds)
}
