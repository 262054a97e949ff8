//! Cascade ("deep ensemble") forest regression and the geospatial pieces
//! needed to estimate surface PM2.5 from satellite aerosol optical depth.
//!
//! The crate is organised bottom-up:
//!
//! * [`data`] holds the feature schema, the tabular [`data::Dataset`],
//!   min-max scaling and train/test/fold splitting.
//! * [`preprocess`] and [`raster`] cover station and raster preparation:
//!   humidity correction, IQR outlier removal, dual-sensor AOD merge,
//!   3x3 window extraction and the QA-derived uncertainty feature.
//! * [`trees`] implements CART regression trees and the random forest /
//!   extremely randomized trees estimators.
//! * [`cascade`] stacks forests into cascade layers with augmented features.
//! * [`eval`] provides metrics, the multivariate linear baseline and
//!   k-fold grid search.
//! * [`kriging`] provides semivariogram fitting and ordinary kriging.

pub mod cascade;
pub mod data;
pub mod error;
pub mod eval;
pub mod kriging;
pub mod preprocess;
pub mod raster;
pub mod rng;
pub mod trees;

pub use error::{Error, Result};
