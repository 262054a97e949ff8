//! Accuracy metrics, the multivariate linear baseline and k-fold grid search.

mod grid;
mod linear;
mod metrics;

pub use grid::{grid_search, CvRow, CvTable, GridAxis, GridSpec, ModelFamily, ParamValue, Params, Scoring};
pub use linear::{fit_linear, LinearModel};
pub use metrics::{compute_metrics, MetricsReport};
