//! Station and raster preparation ahead of model fitting.

mod aod;
mod outliers;
mod station;
mod window;

pub use aod::{
    fit_linear_1d, fit_sensor_regression, merge_aod_grids, merge_daily_aod, normalize_aod_pblh,
    LinearFit, SensorRegression,
};
pub use outliers::{iqr_bounds, iqr_filter, iqr_inlier_mask, quantile_inclusive, IqrSplit};
pub use station::{
    correct_pm_humidity, correct_series, daily_average, read_station_csv, CorrectionCounts,
    DailySeries, Reading, StationSeries, StationTable,
};
pub use window::{
    compute_uncertainty, extract_window, extract_window_at, mask_by_qa, uncertainty_at,
    AdjacencyClass, CloudClass, QaFlags, WindowRejection, WindowStats, WINDOW_MAX_STD,
    WINDOW_MIN_VALID,
};
