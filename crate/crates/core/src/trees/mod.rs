//! CART regression trees and the two forest estimators built on them.
//!
//! Splits minimise weighted child variance. Among equal-gain candidates the
//! lowest feature index wins, then the smallest threshold. Samples with
//! `x[feature] <= threshold` go left.

mod codec;
mod forest;
mod tree;

use serde::{Deserialize, Serialize};

pub use codec::{read_forest, write_forest, FOREST_FORMAT_VERSION, FOREST_MAGIC};
pub(crate) use codec::{read_bytes, read_u64, write_bytes, write_u64};
pub use forest::{fit_forest, ForestEstimator, ForestKind};
pub use tree::{fit_tree, ColumnMatrix, DecisionTree, Node};

/// How many features a node considers when searching for a split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Fraction(f64),
    Count(usize),
}

impl MaxFeatures {
    /// Resolves to a count in `1..=d`.
    pub fn resolve(&self, d: usize) -> usize {
        let k = match *self {
            MaxFeatures::All => d,
            MaxFeatures::Sqrt => (d as f64).sqrt().floor() as usize,
            MaxFeatures::Fraction(f) => (f * d as f64).floor() as usize,
            MaxFeatures::Count(k) => k,
        };
        k.clamp(1, d.max(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Exhaustive threshold scan over each candidate feature.
    BestOfSubset,
    /// One uniform threshold per candidate feature; best of those.
    RandomThreshold,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// `None` grows until the other stopping rules apply.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub split_mode: SplitMode,
    pub seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: None,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
            split_mode: SplitMode::BestOfSubset,
            seed: 0,
        }
    }
}

impl TreeConfig {
    pub fn with_max_depth(mut self, max_depth: Option<usize>) -> Self {
        self.max_depth = max_depth;
        self
    }

    pub fn with_min_samples_leaf(mut self, n: usize) -> Self {
        self.min_samples_leaf = n;
        self
    }

    pub fn with_max_features(mut self, m: MaxFeatures) -> Self {
        self.max_features = m;
        self
    }

    pub fn with_split_mode(mut self, mode: SplitMode) -> Self {
        self.split_mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub(crate) fn validate(&self) -> crate::Result<()> {
        if self.min_samples_leaf == 0 {
            return Err(crate::Error::InvalidArgument(
                "min_samples_leaf must be at least 1".into(),
            ));
        }
        if let MaxFeatures::Fraction(f) = self.max_features {
            if !(f > 0.0 && f <= 1.0) {
                return Err(crate::Error::InvalidArgument(format!(
                    "max_features fraction {f} outside (0, 1]"
                )));
            }
        }
        if self.max_features == MaxFeatures::Count(0) {
            return Err(crate::Error::InvalidArgument("max_features count is 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_features_resolution() {
        assert_eq!(MaxFeatures::Sqrt.resolve(14), 3);
        assert_eq!(MaxFeatures::Sqrt.resolve(22), 4);
        assert_eq!(MaxFeatures::Sqrt.resolve(1), 1);
        assert_eq!(MaxFeatures::Fraction(0.5).resolve(14), 7);
        assert_eq!(MaxFeatures::Fraction(0.8).resolve(14), 11);
        assert_eq!(MaxFeatures::Fraction(0.01).resolve(14), 1);
        assert_eq!(MaxFeatures::Count(40).resolve(14), 14);
        assert_eq!(MaxFeatures::All.resolve(5), 5);
    }

    #[test]
    fn config_validation() {
        assert!(TreeConfig::default().with_min_samples_leaf(0).validate().is_err());
        assert!(TreeConfig::default()
            .with_max_features(MaxFeatures::Fraction(1.5))
            .validate()
            .is_err());
        assert!(TreeConfig::default().validate().is_ok());
    }
}
