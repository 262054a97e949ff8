//! TOML pipeline configuration. Relative paths resolve against the directory
//! holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use aodforest::eval::{GridAxis, ParamValue};
use aodforest::kriging::VariogramKind;
use chrono::NaiveDate;
use serde::Deserialize;

use crate::error::{PipelineError, Result};
use crate::model::{Family, ModelSettings};
use crate::synth::SceneConfig;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Hourly station CSV.
    pub stations: PathBuf,
    /// Directory of `<band>_<date>.asc` rasters.
    pub rasters: PathBuf,
    /// Per-band directory overrides.
    pub band_dirs: BTreeMap<String, PathBuf>,
    pub start_date: Option<NaiveDate>,
    pub end_date: Option<NaiveDate>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            stations: "stations.csv".into(),
            rasters: "rasters".into(),
            band_dirs: BTreeMap::new(),
            start_date: None,
            end_date: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    /// Replace AOD by AOD / PBLH.
    pub normalize_aod: bool,
    /// Mask AOD cells whose QA class is not best before merging.
    pub strict_qa: bool,
    pub variogram_kinds: Vec<VariogramKind>,
    pub kriging_folds: usize,
    pub kriging_neighbours: usize,
    /// Cap on raster points used to select the variogram kind.
    pub max_variogram_points: usize,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        PreprocessSection {
            normalize_aod: false,
            strict_qa: false,
            variogram_kinds: VariogramKind::ALL.to_vec(),
            kriging_folds: 5,
            kriging_neighbours: 16,
            max_variogram_points: 600,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub family: Family,
    pub train_fraction: f64,
    pub cv_folds: usize,
    pub scale_features: bool,
    pub scale_target: bool,
    pub cascade: BTreeMap<String, ParamValue>,
    pub random_forest: BTreeMap<String, ParamValue>,
    pub extra_trees: BTreeMap<String, ParamValue>,
    /// Axes in declaration order; the last axis varies fastest.
    pub grid: Vec<GridAxis>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            family: Family::Cascade,
            train_fraction: 0.7,
            cv_folds: 5,
            scale_features: true,
            scale_target: true,
            cascade: BTreeMap::new(),
            random_forest: BTreeMap::new(),
            extra_trees: BTreeMap::new(),
            grid: Vec::new(),
        }
    }
}

impl ModelSection {
    /// Family defaults with the configured overrides applied.
    pub fn settings(&self) -> Result<ModelSettings> {
        let mut s = ModelSettings::default();
        s.apply(Family::Cascade, &self.cascade)?;
        s.apply(Family::RandomForest, &self.random_forest)?;
        s.apply(Family::ExtraTrees, &self.extra_trees)?;
        Ok(s)
    }

    /// The configured grid, or the single-cell axis `family` when none is given.
    pub fn grid_axes(&self) -> Vec<GridAxis> {
        if self.grid.is_empty() {
            vec![GridAxis {
                name: "family".into(),
                values: vec![ParamValue::Text(self.family.name().into())],
            }]
        } else {
            self.grid.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSection {
    pub variogram_kinds: Vec<VariogramKind>,
    pub kriging_folds: usize,
    pub kriging_neighbours: usize,
    /// Pixels per raster cell in rendered images.
    pub pixel_scale: usize,
}

impl Default for MapSection {
    fn default() -> Self {
        MapSection {
            variogram_kinds: VariogramKind::ALL.to_vec(),
            kriging_folds: 5,
            kriging_neighbours: 16,
            pixel_scale: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub data: DataSection,
    pub preprocess: PreprocessSection,
    pub model: ModelSection,
    pub map: MapSection,
    pub synth: SceneConfig,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: None,
            output_dir: "out".into(),
            data: DataSection::default(),
            preprocess: PreprocessSection::default(),
            model: ModelSection::default(),
            map: MapSection::default(),
            synth: SceneConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(format!("invalid config: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
        Self::from_toml(&text, &base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn stations_path(&self) -> PathBuf {
        self.resolve(&self.data.stations)
    }

    pub fn band_dir(&self, band: &str) -> PathBuf {
        self.resolve(self.data.band_dirs.get(band).unwrap_or(&self.data.rasters))
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| PipelineError::Config("a seed is required (--seed or `seed` in the config)".into()))
    }

    /// Checks value ranges; `inputs` also requires the station file and
    /// raster directories to exist.
    pub fn validate(&self, inputs: bool) -> Result<()> {
        let cfg = |m: String| Err(PipelineError::Config(m));
        if let (Some(a), Some(b)) = (self.data.start_date, self.data.end_date) {
            if b < a {
                return cfg(format!("date range is empty: {a} .. {b}"));
            }
        }
        let m = &self.model;
        if !(m.train_fraction > 0.0 && m.train_fraction < 1.0) {
            return cfg(format!("model.train_fraction {} outside (0, 1)", m.train_fraction));
        }
        if m.cv_folds < 2 {
            return cfg("model.cv_folds must be at least 2".into());
        }
        for axis in &m.grid {
            if axis.values.is_empty() {
                return cfg(format!("grid axis {:?} has no values", axis.name));
            }
        }
        m.settings()?;
        for (name, kinds, folds, k) in [
            ("preprocess", &self.preprocess.variogram_kinds, self.preprocess.kriging_folds, self.preprocess.kriging_neighbours),
            ("map", &self.map.variogram_kinds, self.map.kriging_folds, self.map.kriging_neighbours),
        ] {
            if kinds.is_empty() {
                return cfg(format!("{name}.variogram_kinds is empty"));
            }
            if folds < 2 || k == 0 {
                return cfg(format!("{name}: kriging_folds must be >= 2 and kriging_neighbours >= 1"));
            }
        }
        if self.preprocess.max_variogram_points < 10 {
            return cfg("preprocess.max_variogram_points must be at least 10".into());
        }
        if self.map.pixel_scale == 0 {
            return cfg("map.pixel_scale must be at least 1".into());
        }
        if inputs {
            let st = self.stations_path();
            if !st.is_file() {
                return cfg(format!("station file {} does not exist", st.display()));
            }
            let mut dirs = vec![self.band_dir("")];
            dirs.extend(self.data.band_dirs.keys().map(|b| self.band_dir(b)));
            for d in dirs {
                if !d.is_dir() {
                    return cfg(format!("raster directory {} does not exist", d.display()));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let text = r#"
            seed = 7
            output_dir = "results"
            [data]
            stations = "in/st.csv"
            start_date = "2018-01-01"
            end_date = "2018-01-31"
            [data.band_dirs]
            PBLH = "/abs/pblh"
            [preprocess]
            normalize_aod = true
            variogram_kinds = ["spherical", "gaussian"]
            [model]
            family = "random_forest"
            [model.random_forest]
            n_trees = 50
            max_depth = "none"
            [[model.grid]]
            name = "max_features"
            values = [0.5, "sqrt"]
            [[model.grid]]
            name = "min_samples_leaf"
            values = [1, 5]
            [synth]
            n_days = 3
        "#;
        let c = PipelineConfig::from_toml(text, Path::new("/cfg")).unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.output_dir(), PathBuf::from("/cfg/results"));
        assert_eq!(c.stations_path(), PathBuf::from("/cfg/in/st.csv"));
        assert_eq!(c.band_dir("PBLH"), PathBuf::from("/abs/pblh"));
        assert_eq!(c.band_dir("T"), PathBuf::from("/cfg/rasters"));
        assert!(c.preprocess.normalize_aod);
        assert_eq!(c.preprocess.variogram_kinds, vec![VariogramKind::Spherical, VariogramKind::Gaussian]);
        assert_eq!(c.model.family, Family::RandomForest);
        assert_eq!(c.model.settings().unwrap().random_forest.n_trees, 50);
        let axes = c.model.grid_axes();
        assert_eq!(axes[0].name, "max_features");
        assert_eq!(axes[1].values, vec![ParamValue::Int(1), ParamValue::Int(5)]);
        assert_eq!(c.synth.n_days, 3);
        c.validate(false).unwrap();
    }

    #[test]
    fn rejects_bad_configs() {
        let base = Path::new(".");
        assert!(PipelineConfig::from_toml("bogus = 1", base).is_err());
        let c = PipelineConfig::from_toml("[data]\nstart_date = \"2018-02-01\"\nend_date = \"2018-01-01\"", base).unwrap();
        assert!(matches!(c.validate(false), Err(PipelineError::Config(_))));
        let c = PipelineConfig::from_toml("[model.cascade]\nlayers = \"many\"", base).unwrap();
        assert!(c.validate(false).is_err());
        let c = PipelineConfig::default();
        assert!(c.require_seed().is_err());
        assert!(PipelineConfig::from_toml("", Path::new("/nonexistent")).unwrap().validate(true).is_err());
    }

    #[test]
    fn default_grid_is_single_family_cell() {
        let c = PipelineConfig::default();
        let axes = c.model.grid_axes();
        assert_eq!(axes.len(), 1);
        assert_eq!(axes[0].values, vec![ParamValue::Text("cascade".into())]);
    }
}
