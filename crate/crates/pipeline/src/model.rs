//! Model families, hyperparameter settings and the deployable model bundle.
//!
//! A bundle is `AODMODEL`, a `u32` format version, a length-prefixed JSON
//! manifest (family, parameters, schema, scaler, linear coefficients) and,
//! for tree families, the forest or cascade container.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use aodforest::cascade::{fit_cascade, read_cascade, write_cascade, Augmentation, CascadeConfig, CascadeModel, LayerCount};
use aodforest::data::{FeatureSchema, MinMaxScaler};
use aodforest::eval::{fit_linear, LinearModel, ParamValue, Params};
use aodforest::rng;
use aodforest::trees::{read_forest, write_forest, ForestEstimator, ForestKind, MaxFeatures, TreeConfig};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"AODMODEL";
pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAX_MANIFEST: u64 = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Cascade,
    RandomForest,
    ExtraTrees,
    Linear,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Cascade, Family::RandomForest, Family::ExtraTrees, Family::Linear];

    pub fn name(self) -> &'static str {
        match self {
            Family::Cascade => "cascade",
            Family::RandomForest => "random_forest",
            Family::ExtraTrees => "extra_trees",
            Family::Linear => "linear",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown model family {s:?}")))
    }
}

fn bad(name: &str, v: &ParamValue, expected: &str) -> PipelineError {
    PipelineError::Config(format!("parameter {name} = {v}: expected {expected}"))
}

fn as_count(name: &str, v: &ParamValue, min: usize) -> Result<usize> {
    v.as_i64()
        .filter(|&i| i >= min as i64)
        .map(|i| i as usize)
        .ok_or_else(|| bad(name, v, &format!("an integer >= {min}")))
}

/// `"sqrt"`, `"all"`, a fraction in (0, 1] or a feature count.
pub fn parse_max_features(name: &str, v: &ParamValue) -> Result<MaxFeatures> {
    match v {
        ParamValue::Text(s) if s == "sqrt" => Ok(MaxFeatures::Sqrt),
        ParamValue::Text(s) if s == "all" => Ok(MaxFeatures::All),
        ParamValue::Float(f) if *f > 0.0 && *f <= 1.0 => Ok(MaxFeatures::Fraction(*f)),
        ParamValue::Int(k) if *k >= 1 => Ok(MaxFeatures::Count(*k as usize)),
        _ => Err(bad(name, v, "\"sqrt\", \"all\", a fraction in (0, 1] or a count")),
    }
}

/// A depth >= 1 or `"none"` for unlimited growth.
pub fn parse_max_depth(name: &str, v: &ParamValue) -> Result<Option<usize>> {
    match v {
        ParamValue::Text(s) if s == "none" => Ok(None),
        _ => as_count(name, v, 1).map(Some),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForestSettings {
    pub n_trees: usize,
    pub tree: TreeConfig,
}

impl ForestSettings {
    pub fn defaults(kind: ForestKind) -> Self {
        match kind {
            ForestKind::RandomForest => ForestSettings {
                n_trees: 500,
                tree: TreeConfig::default()
                    .with_max_depth(Some(10))
                    .with_max_features(MaxFeatures::Fraction(0.5)),
            },
            ForestKind::ExtraTrees => ForestSettings {
                n_trees: 1000,
                tree: TreeConfig::default()
                    .with_max_depth(Some(10))
                    .with_max_features(MaxFeatures::Fraction(0.8)),
            },
        }
    }

    pub fn set(&mut self, name: &str, v: &ParamValue) -> Result<()> {
        match name {
            "n_trees" => self.n_trees = as_count(name, v, 1)?,
            "max_depth" => self.tree.max_depth = parse_max_depth(name, v)?,
            "max_features" => self.tree.max_features = parse_max_features(name, v)?,
            "min_samples_leaf" => self.tree.min_samples_leaf = as_count(name, v, 1)?,
            _ => return Err(PipelineError::Config(format!("unknown forest parameter {name:?}"))),
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CascadeSettings {
    pub config: CascadeConfig,
}

impl Default for CascadeSettings {
    fn default() -> Self {
        CascadeSettings {
            config: CascadeConfig::default(),
        }
    }
}

impl CascadeSettings {
    pub fn set(&mut self, name: &str, v: &ParamValue) -> Result<()> {
        let c = &mut self.config;
        match name {
            "layers" => {
                c.layers = match (v, c.layers) {
                    (ParamValue::Text(s), LayerCount::Fixed(_)) if s == "auto" => LayerCount::Auto { max: 5, tol: 0.0 },
                    (ParamValue::Text(s), auto) if s == "auto" => auto,
                    _ => LayerCount::Fixed(as_count(name, v, 0)?),
                }
            }
            "max_layers" | "tol" => {
                let (mut max, mut tol) = match c.layers {
                    LayerCount::Auto { max, tol } => (max, tol),
                    LayerCount::Fixed(_) => (5, 0.0),
                };
                if name == "max_layers" {
                    max = as_count(name, v, 1)?;
                } else {
                    tol = v.as_f64().filter(|t| *t >= 0.0).ok_or_else(|| bad(name, v, "a number >= 0"))?;
                }
                c.layers = LayerCount::Auto { max, tol };
            }
            "n_random_forest" => c.n_random_forest = as_count(name, v, 0)?,
            "n_extra_trees" => c.n_extra_trees = as_count(name, v, 0)?,
            "trees_per_estimator" | "n_trees" => c.trees_per_estimator = as_count(name, v, 1)?,
            "max_depth" => c.tree.max_depth = parse_max_depth(name, v)?,
            "max_features" => c.tree.max_features = parse_max_features(name, v)?,
            "min_samples_leaf" => c.tree.min_samples_leaf = as_count(name, v, 1)?,
            "augmentation" => {
                c.augmentation = match v.as_str() {
                    Some("out_of_fold") => Augmentation::OutOfFold,
                    Some("in_sample") => Augmentation::InSample,
                    _ => return Err(bad(name, v, "\"out_of_fold\" or \"in_sample\"")),
                }
            }
            "cv_folds" => c.cv_folds = as_count(name, v, 2)?,
            _ => return Err(PipelineError::Config(format!("unknown cascade parameter {name:?}"))),
        }
        Ok(())
    }
}

/// Base hyperparameters of every family; grid cells override them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelSettings {
    pub cascade: CascadeSettings,
    pub random_forest: ForestSettings,
    pub extra_trees: ForestSettings,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            cascade: CascadeSettings::default(),
            random_forest: ForestSettings::defaults(ForestKind::RandomForest),
            extra_trees: ForestSettings::defaults(ForestKind::ExtraTrees),
        }
    }
}

impl ModelSettings {
    /// Applies `key = value` overrides onto one family's settings.
    pub fn apply(&mut self, family: Family, overrides: &BTreeMap<String, ParamValue>) -> Result<()> {
        for (k, v) in overrides {
            self.set(family, k, v)?;
        }
        Ok(())
    }

    fn set(&mut self, family: Family, name: &str, v: &ParamValue) -> Result<()> {
        match family {
            Family::Cascade => self.cascade.set(name, v),
            Family::RandomForest => self.random_forest.set(name, v),
            Family::ExtraTrees => self.extra_trees.set(name, v),
            Family::Linear => Err(PipelineError::Config(format!(
                "the linear family has no parameter {name:?}"
            ))),
        }
    }

    /// The concrete model for one grid cell. A `family` axis value selects
    /// the family for that cell; otherwise `default_family` applies.
    pub fn spec(&self, default_family: Family, params: &Params) -> Result<ModelSpec> {
        let mut family = default_family;
        for (name, v) in params.iter().filter(|(n, _)| n == "family") {
            family = v.as_str().ok_or_else(|| bad(name, v, "a family name"))?.parse()?;
        }
        let mut s = *self;
        for (name, v) in params.iter().filter(|(n, _)| n != "family") {
            s.set(family, name, v)?;
        }
        Ok(match family {
            Family::Cascade => ModelSpec::Cascade(s.cascade.config),
            Family::RandomForest => ModelSpec::Forest(ForestKind::RandomForest, s.random_forest),
            Family::ExtraTrees => ModelSpec::Forest(ForestKind::ExtraTrees, s.extra_trees),
            Family::Linear => ModelSpec::Linear,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModelSpec {
    Cascade(CascadeConfig),
    Forest(ForestKind, ForestSettings),
    Linear,
}

impl ModelSpec {
    pub fn family(&self) -> Family {
        match self {
            ModelSpec::Cascade(_) => Family::Cascade,
            ModelSpec::Forest(ForestKind::RandomForest, _) => Family::RandomForest,
            ModelSpec::Forest(ForestKind::ExtraTrees, _) => Family::ExtraTrees,
            ModelSpec::Linear => Family::Linear,
        }
    }

    pub fn fit(&self, x: &Array2<f64>, y: &[f64], seed: u64) -> Result<FittedModel> {
        Ok(match *self {
            ModelSpec::Cascade(cfg) => FittedModel::Cascade(fit_cascade(x, y, &CascadeConfig { seed, ..cfg })?),
            ModelSpec::Forest(kind, s) => FittedModel::Forest(ForestEstimator::fit(
                x,
                y,
                kind,
                s.n_trees,
                &s.tree,
                kind.default_bootstrap(),
                seed,
            )?),
            ModelSpec::Linear => FittedModel::Linear(fit_linear(x, y)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FittedModel {
    Cascade(CascadeModel),
    Forest(ForestEstimator),
    Linear(LinearModel),
}

impl FittedModel {
    pub fn family(&self) -> Family {
        match self {
            FittedModel::Cascade(_) => Family::Cascade,
            FittedModel::Forest(f) => match f.kind() {
                ForestKind::RandomForest => Family::RandomForest,
                ForestKind::ExtraTrees => Family::ExtraTrees,
            },
            FittedModel::Linear(_) => Family::Linear,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            FittedModel::Cascade(m) => m.n_features(),
            FittedModel::Forest(f) => f.n_features(),
            FittedModel::Linear(l) => l.coefficients.len(),
        }
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        Ok(match self {
            FittedModel::Cascade(m) => m.predict(x)?,
            FittedModel::Forest(f) => f.predict(x)?,
            FittedModel::Linear(l) => l.predict(x)?,
        })
    }
}

/// A fitted model with the schema and scaling it was trained under.
/// Predictions take and return original units.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub params: Params,
    pub schema: FeatureSchema,
    pub scaler: Option<MinMaxScaler>,
    pub model: FittedModel,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    family: Family,
    params: Params,
    schema: FeatureSchema,
    scaler: Option<MinMaxScaler>,
    linear: Option<LinearModel>,
}

impl ModelBundle {
    pub fn new(params: Params, schema: FeatureSchema, scaler: Option<MinMaxScaler>, model: FittedModel) -> Result<Self> {
        if model.n_features() != schema.len() {
            return Err(PipelineError::Data(format!(
                "model expects {} features, schema has {}",
                model.n_features(),
                schema.len()
            )));
        }
        if let Some(s) = &scaler {
            if s.feature_names.as_slice() != schema.names() {
                return Err(PipelineError::Data("scaler and schema disagree".into()));
            }
        }
        Ok(ModelBundle {
            params,
            schema,
            scaler,
            model,
        })
    }

    pub fn family(&self) -> Family {
        self.model.family()
    }

    /// Predictions in original target units for raw (unscaled) features.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.schema.len() {
            return Err(PipelineError::Data(format!(
                "model expects {} features, got {}",
                self.schema.len(),
                x.ncols()
            )));
        }
        let Some(scaler) = &self.scaler else {
            return self.model.predict(x);
        };
        let pred = self.model.predict(&scaler.transform_matrix(x)?)?;
        if scaler.target_bounds.is_none() {
            return Ok(pred);
        }
        pred.into_iter()
            .map(|p| scaler.invert_target(p).map_err(Into::into))
            .collect()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
        let manifest = Manifest {
            family: self.family(),
            params: self.params.clone(),
            schema: self.schema.clone(),
            scaler: self.scaler.clone(),
            linear: match &self.model {
                FittedModel::Linear(l) => Some(l.clone()),
                _ => None,
            },
        };
        let json = serde_json::to_vec(&manifest)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        match &self.model {
            FittedModel::Cascade(m) => write_cascade(w, m)?,
            FittedModel::Forest(f) => write_forest(w, f)?,
            FittedModel::Linear(_) => {}
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let format = |m: &str| PipelineError::Core(aodforest::Error::Format(m.into()));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(format("not a model bundle"));
        }
        let mut v = [0u8; 4];
        r.read_exact(&mut v)?;
        let version = u32::from_le_bytes(v);
        if version != MODEL_FORMAT_VERSION {
            return Err(format(&format!("model format version {version} unsupported")));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len);
        if len > MAX_MANIFEST {
            return Err(format("model manifest too large"));
        }
        let mut json = Vec::new();
        r.take(len).read_to_end(&mut json)?;
        if json.len() as u64 != len {
            return Err(format("truncated model manifest"));
        }
        let m: Manifest = serde_json::from_slice(&json)?;
        let model = match m.family {
            Family::Cascade => FittedModel::Cascade(read_cascade(r)?),
            Family::RandomForest | Family::ExtraTrees => {
                let f = read_forest(r)?;
                let expected = if m.family == Family::RandomForest {
                    ForestKind::RandomForest
                } else {
                    ForestKind::ExtraTrees
                };
                if f.kind() != expected {
                    return Err(format("forest kind disagrees with manifest"));
                }
                FittedModel::Forest(f)
            }
            Family::Linear => FittedModel::Linear(m.linear.ok_or_else(|| format("linear coefficients missing"))?),
        };
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(format("trailing bytes after model"));
        }
        ModelBundle::new(m.params, m.schema, m.scaler, model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        aodforest::raster::write_atomic(path, |w| {
            self.write_to(w).map_err(|e| match e {
                PipelineError::Core(c) => c,
                other => aodforest::Error::InvalidArgument(other.to_string()),
            })
        })?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
        Self::read_from(&mut std::io::BufReader::new(f))
    }
}

/// Seed for the final fit of the selected cell.
pub fn final_fit_seed(seed: u64) -> u64 {
    rng::derive_seed(seed, &[0xF1A1])
}
