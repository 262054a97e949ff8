//! Cascade forest: stacked layers of forest estimators where every layer
//! appends its estimators' predictions to the features it received.
//!
//! With `n` layers and `m` estimators per layer the matrix entering layer `j`
//! (0-based) has `d + m*j` columns. After the last layer a head of the same
//! composition is fitted on the `d + m*n` wide matrix and its estimators are
//! averaged.

use std::io::{Read, Write};

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{kfold_indices, FeatureSchema, MinMaxScaler};
use crate::error::{Error, Result};
use crate::rng;
use crate::trees::{
    read_bytes, read_forest, read_u64, write_bytes, write_forest, write_u64, ForestEstimator,
    ForestKind, MaxFeatures, TreeConfig,
};

pub const CASCADE_MAGIC: &[u8; 8] = b"AODCSCD\0";
pub const CASCADE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerCount {
    Fixed(usize),
    /// Grow while the out-of-fold RMSE of the layer average improves by more
    /// than `tol`, up to `max` augmenting layers.
    Auto { max: usize, tol: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Augmentation {
    /// Augmentation columns are k-fold out-of-fold predictions.
    OutOfFold,
    /// Augmentation columns are the estimators' own training-set predictions.
    InSample,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub layers: LayerCount,
    pub n_random_forest: usize,
    pub n_extra_trees: usize,
    pub trees_per_estimator: usize,
    pub tree: TreeConfig,
    pub augmentation: Augmentation,
    pub cv_folds: usize,
    pub seed: u64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            layers: LayerCount::Fixed(2),
            n_random_forest: 2,
            n_extra_trees: 2,
            trees_per_estimator: 2000,
            tree: TreeConfig::default().with_max_features(MaxFeatures::Sqrt),
            augmentation: Augmentation::OutOfFold,
            cv_folds: 5,
            seed: 0,
        }
    }
}

impl CascadeConfig {
    pub fn estimators_per_layer(&self) -> usize {
        self.n_random_forest + self.n_extra_trees
    }

    /// Estimator kinds in column order: random forests first, then extra trees.
    pub fn composition(&self) -> Vec<ForestKind> {
        std::iter::repeat_n(ForestKind::RandomForest, self.n_random_forest)
            .chain(std::iter::repeat_n(ForestKind::ExtraTrees, self.n_extra_trees))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.estimators_per_layer() == 0 {
            return Err(Error::InvalidArgument("cascade layer has no estimators".into()));
        }
        if self.trees_per_estimator == 0 {
            return Err(Error::InvalidArgument("trees_per_estimator must be at least 1".into()));
        }
        if let LayerCount::Auto { tol, .. } = self.layers {
            if !(tol.is_finite() && tol >= 0.0) {
                return Err(Error::InvalidArgument(format!("auto tolerance {tol} must be >= 0")));
            }
        }
        self.tree.validate()
    }

    fn needs_folds(&self) -> bool {
        matches!(self.layers, LayerCount::Auto { .. })
            || (self.augmentation == Augmentation::OutOfFold && !matches!(self.layers, LayerCount::Fixed(0)))
    }
}

/// Carried columns first, then the new estimator-output columns.
pub fn augment(layer_outputs: &Array2<f64>, carried: &Array2<f64>) -> Result<Array2<f64>> {
    if layer_outputs.nrows() != carried.nrows() {
        return Err(Error::dim("augmentation rows", carried.nrows(), layer_outputs.nrows()));
    }
    Ok(concatenate(Axis(1), &[carried.view(), layer_outputs.view()]).expect("row counts checked"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeModel {
    pub config: CascadeConfig,
    n_features: usize,
    layers: Vec<Vec<ForestEstimator>>,
    head: Vec<ForestEstimator>,
    /// Out-of-fold RMSE of each kept level's averaged prediction, when computed.
    validation_rmse: Vec<f64>,
    /// Preprocessing carried alongside the model for deployment.
    pub scaler: Option<MinMaxScaler>,
    pub schema: Option<FeatureSchema>,
}

fn columns_to_matrix(cols: &[Vec<f64>], n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, cols.len()), |(i, j)| cols[j][i])
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let ss: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    (ss / a.len() as f64).sqrt()
}

struct Level {
    estimators: Vec<ForestEstimator>,
    /// Columns to append when this level is followed by another one.
    augmentation: Array2<f64>,
    oof_rmse: Option<f64>,
}

fn fit_level(x: &Array2<f64>, y: &[f64], cfg: &CascadeConfig, level: usize, with_oof: bool) -> Result<Level> {
    let n = x.nrows();
    let kinds = cfg.composition();
    let fit = |xs: &Array2<f64>, ys: &[f64], kind: ForestKind, path: &[u64]| {
        ForestEstimator::fit(
            xs,
            ys,
            kind,
            cfg.trees_per_estimator,
            &cfg.tree,
            kind.default_bootstrap(),
            rng::derive_seed(cfg.seed, path),
        )
    };
    let mut estimators = Vec::with_capacity(kinds.len());
    for (e, &kind) in kinds.iter().enumerate() {
        estimators.push(fit(x, y, kind, &[level as u64, e as u64])?);
    }
    let oof = if with_oof {
        let folds = kfold_indices(n, cfg.cv_folds, rng::derive_seed(cfg.seed, &[level as u64, 0xF0]))?;
        let mut cols = vec![vec![0.0; n]; kinds.len()];
        for (f, (train, valid)) in folds.iter().enumerate() {
            let xt = x.select(Axis(0), train);
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let xv = x.select(Axis(0), valid);
            for (e, &kind) in kinds.iter().enumerate() {
                let est = fit(&xt, &yt, kind, &[level as u64, e as u64, 1 + f as u64])?;
                for (&i, p) in valid.iter().zip(est.predict(&xv)?) {
                    cols[e][i] = p;
                }
            }
        }
        Some(cols)
    } else {
        None
    };
    let oof_rmse = oof.as_ref().map(|cols| {
        let mean: Vec<f64> = (0..n)
            .map(|i| cols.iter().map(|c| c[i]).sum::<f64>() / cols.len() as f64)
            .collect();
        rmse(&mean, y)
    });
    let augmentation = match (cfg.augmentation, oof) {
        (Augmentation::OutOfFold, Some(cols)) => columns_to_matrix(&cols, n),
        _ => {
            let cols: Vec<Vec<f64>> = estimators.iter().map(|e| e.predict(x)).collect::<Result<_>>()?;
            columns_to_matrix(&cols, n)
        }
    };
    Ok(Level {
        estimators,
        augmentation,
        oof_rmse,
    })
}

/// Fits a cascade on (already scaled) features `x` and targets `y`.
pub fn fit_cascade(x: &Array2<f64>, y: &[f64], cfg: &CascadeConfig) -> Result<CascadeModel> {
    cfg.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Empty("cascade training rows".into()));
    }
    if n != y.len() {
        return Err(Error::dim("cascade target length", n, y.len()));
    }
    if cfg.needs_folds() && n < cfg.cv_folds {
        return Err(Error::InvalidArgument(format!(
            "{n} rows cannot be split into {} augmentation folds",
            cfg.cv_folds
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cascade training data".into()));
    }

    let mut layers = Vec::new();
    let mut validation_rmse = Vec::new();
    let mut current = x.to_owned();
    let head = match cfg.layers {
        LayerCount::Fixed(n_layers) => {
            let with_oof = cfg.augmentation == Augmentation::OutOfFold;
            for j in 0..n_layers {
                let level = fit_level(&current, y, cfg, j, with_oof)?;
                validation_rmse.extend(level.oof_rmse);
                current = augment(&level.augmentation, &current)?;
                layers.push(level.estimators);
            }
            fit_level(&current, y, cfg, n_layers, false)?.estimators
        }
        LayerCount::Auto { max, tol } => {
            let mut level = fit_level(&current, y, cfg, 0, true)?;
            let mut best = level.oof_rmse.expect("auto mode computes out-of-fold predictions");
            validation_rmse.push(best);
            for j in 1..=max {
                let next_input = augment(&level.augmentation, &current)?;
                let next = fit_level(&next_input, y, cfg, j, true)?;
                let score = next.oof_rmse.expect("auto mode computes out-of-fold predictions");
                log::debug!("cascade level {j}: out-of-fold rmse {score} (best {best})");
                if score >= best - tol {
                    break;
                }
                best = score;
                validation_rmse.push(score);
                layers.push(std::mem::replace(&mut level, next).estimators);
                current = next_input;
            }
            level.estimators
        }
    };
    Ok(CascadeModel {
        config: *cfg,
        n_features: x.ncols(),
        layers,
        head,
        validation_rmse,
        scaler: None,
        schema: None,
    })
}

impl CascadeModel {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Number of augmenting layers before the head.
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Vec<ForestEstimator>] {
        &self.layers
    }

    pub fn head(&self) -> &[ForestEstimator] {
        &self.head
    }

    pub fn validation_rmse(&self) -> &[f64] {
        &self.validation_rmse
    }

    /// Width of the matrix entering each layer, the head last.
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut w = vec![self.n_features];
        for layer in &self.layers {
            w.push(w.last().unwrap() + layer.len());
        }
        w
    }

    /// The matrix the head sees: inputs plus every layer's prediction columns.
    pub fn transform(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::dim("cascade input columns", self.n_features, x.ncols()));
        }
        let mut current = x.to_owned();
        for layer in &self.layers {
            let cols: Vec<Vec<f64>> = layer.iter().map(|e| e.predict(&current)).collect::<Result<_>>()?;
            current = augment(&columns_to_matrix(&cols, x.nrows()), &current)?;
        }
        Ok(current)
    }

    /// Per-estimator head predictions, in composition order.
    pub fn head_predictions(&self, x: &Array2<f64>) -> Result<Vec<Vec<f64>>> {
        let z = self.transform(x)?;
        self.head.iter().map(|e| e.predict(&z)).collect()
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        let per = self.head_predictions(x)?;
        let m = per.len() as f64;
        Ok((0..x.nrows())
            .map(|i| per.iter().map(|p| p[i]).sum::<f64>() / m)
            .collect())
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: CascadeConfig,
    n_features: usize,
    layer_sizes: Vec<usize>,
    head_size: usize,
    validation_rmse: Vec<f64>,
    scaler: Option<MinMaxScaler>,
    schema: Option<FeatureSchema>,
}

fn write_nested<W: Write>(w: &mut W, forest: &ForestEstimator) -> Result<()> {
    let mut buf = Vec::new();
    write_forest(&mut buf, forest)?;
    write_bytes(w, &buf)
}

fn read_nested<R: Read>(r: &mut R) -> Result<ForestEstimator> {
    let buf = read_bytes(r)?;
    let mut slice = buf.as_slice();
    let f = read_forest(&mut slice)?;
    if !slice.is_empty() {
        return Err(Error::Format("trailing bytes after nested forest".into()));
    }
    Ok(f)
}

/// Magic, version, JSON manifest, then every layer estimator followed by the
/// head estimators, each as a length-prefixed forest container.
pub fn write_cascade<W: Write>(w: &mut W, model: &CascadeModel) -> Result<()> {
    w.write_all(CASCADE_MAGIC)?;
    w.write_all(&CASCADE_FORMAT_VERSION.to_le_bytes())?;
    let manifest = Manifest {
        config: model.config,
        n_features: model.n_features,
        layer_sizes: model.layers.iter().map(Vec::len).collect(),
        head_size: model.head.len(),
        validation_rmse: model.validation_rmse.clone(),
        scaler: model.scaler.clone(),
        schema: model.schema.clone(),
    };
    write_bytes(w, &serde_json::to_vec(&manifest)?)?;
    write_u64(w, (model.layers.iter().map(Vec::len).sum::<usize>() + model.head.len()) as u64)?;
    for f in model.layers.iter().flatten().chain(&model.head) {
        write_nested(w, f)?;
    }
    Ok(())
}

pub fn read_cascade<R: Read>(r: &mut R) -> Result<CascadeModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CASCADE_MAGIC {
        return Err(Error::Format("not a cascade container".into()));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    if version != CASCADE_FORMAT_VERSION {
        return Err(Error::Format(format!("cascade format version {version} unsupported")));
    }
    let m: Manifest = serde_json::from_slice(&read_bytes(r)?)?;
    let total = read_u64(r)? as usize;
    if total != m.layer_sizes.iter().sum::<usize>() + m.head_size || m.head_size == 0 {
        return Err(Error::Format("cascade manifest disagrees with estimator count".into()));
    }
    let mut width = m.n_features;
    let mut layers = Vec::with_capacity(m.layer_sizes.len());
    for &size in &m.layer_sizes {
        let layer: Vec<ForestEstimator> = (0..size).map(|_| read_nested(r)).collect::<Result<_>>()?;
        if layer.iter().any(|f| f.n_features() != width) {
            return Err(Error::Format("layer estimator width mismatch".into()));
        }
        width += size;
        layers.push(layer);
    }
    let head: Vec<ForestEstimator> = (0..m.head_size).map(|_| read_nested(r)).collect::<Result<_>>()?;
    if head.iter().any(|f| f.n_features() != width) {
        return Err(Error::Format("head estimator width mismatch".into()));
    }
    Ok(CascadeModel {
        config: m.config,
        n_features: m.n_features,
        layers,
        head,
        validation_rmse: m.validation_rmse,
        scaler: m.scaler,
        schema: m.schema,
    })
}
