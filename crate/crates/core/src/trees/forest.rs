use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, ColumnMatrix, DecisionTree};
use super::{SplitMode, TreeConfig};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestKind {
    /// Bootstrap resamples, best split among the candidate features.
    RandomForest,
    /// Full sample, one random threshold per candidate feature.
    ExtraTrees,
}

impl ForestKind {
    pub fn split_mode(self) -> SplitMode {
        match self {
            ForestKind::RandomForest => SplitMode::BestOfSubset,
            ForestKind::ExtraTrees => SplitMode::RandomThreshold,
        }
    }

    pub fn default_bootstrap(self) -> bool {
        matches!(self, ForestKind::RandomForest)
    }

    pub fn name(self) -> &'static str {
        match self {
            ForestKind::RandomForest => "random_forest",
            ForestKind::ExtraTrees => "extra_trees",
        }
    }
}

/// Averaging ensemble of regression trees.
#[derive(Clone, Debug, PartialEq)]
pub struct ForestEstimator {
    pub(crate) kind: ForestKind,
    pub(crate) config: TreeConfig,
    pub(crate) bootstrap: bool,
    pub(crate) seed: u64,
    pub(crate) trees: Vec<DecisionTree>,
    pub(crate) n_features: usize,
}

/// Fits a forest with the kind's default sampling (bootstrap for random
/// forests, full sample for extra trees). The kind also fixes the split
/// mode, overriding `cfg.split_mode`.
pub fn fit_forest(
    x: &Array2<f64>,
    y: &[f64],
    kind: ForestKind,
    n_trees: usize,
    cfg: &TreeConfig,
    seed: u64,
) -> Result<ForestEstimator> {
    ForestEstimator::fit(x, y, kind, n_trees, cfg, kind.default_bootstrap(), seed)
}

impl ForestEstimator {
    /// Tree `i` draws from streams derived from `(seed, i)` only, so the
    /// result does not depend on how trees are scheduled across threads.
    pub fn fit(
        x: &Array2<f64>,
        y: &[f64],
        kind: ForestKind,
        n_trees: usize,
        cfg: &TreeConfig,
        bootstrap: bool,
        seed: u64,
    ) -> Result<Self> {
        if n_trees == 0 {
            return Err(Error::InvalidArgument("n_trees must be at least 1".into()));
        }
        let n = x.nrows();
        if n == 0 {
            return Err(Error::Empty("training rows".into()));
        }
        if n != y.len() {
            return Err(Error::dim("target length", n, y.len()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("targets".into()));
        }
        cfg.validate()?;
        let cols = ColumnMatrix::from_array(x)?;
        let mut config = *cfg;
        config.split_mode = kind.split_mode();
        config.seed = seed;

        let trees = (0..n_trees)
            .into_par_iter()
            .map(|i| {
                let sample: Vec<u32> = if bootstrap {
                    Self::bootstrap_indices(n, seed, i).into_iter().map(|v| v as u32).collect()
                } else {
                    (0..n as u32).collect()
                };
                let tree_cfg = config.with_seed(rng::derive_seed(seed, &[i as u64]));
                grow_tree(&cols, y, sample, &tree_cfg, rng::stream(tree_cfg.seed, &[]))
            })
            .collect();
        Ok(ForestEstimator {
            kind,
            config,
            bootstrap,
            seed,
            trees,
            n_features: x.ncols(),
        })
    }

    /// The bootstrap resample (size `n`, with replacement) used by tree `i`.
    pub fn bootstrap_indices(n: usize, seed: u64, tree_index: usize) -> Vec<usize> {
        let mut r = rng::stream(seed, &[tree_index as u64, 0xB007]);
        (0..n).map(|_| r.random_range(0..n)).collect()
    }

    pub fn kind(&self) -> ForestKind {
        self.kind
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn bootstrap(&self) -> bool {
        self.bootstrap
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Mean of the member-tree predictions for one row.
    pub fn predict_row(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::dim("forest input", self.n_features, x.len()));
        }
        Ok(self.predict_row_unchecked(x))
    }

    #[inline]
    fn predict_row_unchecked(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_unchecked(x)).sum();
        sum / self.trees.len() as f64
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::dim("forest input columns", self.n_features, x.ncols()));
        }
        let x = x.as_standard_layout();
        let d = self.n_features.max(1);
        let flat = x.as_slice().expect("standard layout");
        Ok(flat
            .par_chunks(d)
            .map(|row| self.predict_row_unchecked(row))
            .collect())
    }
}
