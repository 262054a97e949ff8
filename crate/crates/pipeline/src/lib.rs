//! Configuration-driven pipeline around the `aodforest` library: data
//! preparation, model training and evaluation, daily and annual PM2.5 maps,
//! AQI labelling and synthetic scene generation.

pub mod aqi;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod logs;
pub mod maps;
pub mod model;
pub mod prepare;
pub mod synth;
pub mod train;

pub use error::{PipelineError, Result};
