//! Ordinary kriging with fitted semivariograms.
//!
//! Points are `(x, y, value)` with `x` = longitude and `y` = latitude in
//! degrees; distances are planar Euclidean on those coordinates.

mod ordinary;
mod search;
mod variogram;

pub use ordinary::{krige_predict, krige_predict_local, KrigingSolution, OrdinaryKriging};
pub use search::{kriging_grid_search, KindScore, KrigingSelection};
pub use variogram::{
    default_max_dist, empirical_variogram, fit_variogram, VariogramBin, VariogramKind, VariogramModel,
    DEFAULT_BINS,
};

pub(crate) fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}
