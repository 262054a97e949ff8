//! PM2.5 air quality index categories.

use serde::Serialize;

use crate::error::{PipelineError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum AqiLevel {
    Good,
    Moderate,
    UnhealthySensitive,
    Unhealthy,
    VeryUnhealthy,
    Hazardous,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AqiCategory {
    pub level: AqiLevel,
    pub label: &'static str,
    /// Closed PM2.5 interval in µg/m³.
    pub pm_lower: f64,
    pub pm_upper: f64,
    pub index_lower: u32,
    pub index_upper: u32,
    /// Display colour for rendered maps.
    pub color: [u8; 3],
}

pub const AQI_TABLE: [AqiCategory; 6] = [
    AqiCategory {
        level: AqiLevel::Good,
        label: "Good",
        pm_lower: 0.0,
        pm_upper: 12.0,
        index_lower: 0,
        index_upper: 50,
        color: [0, 228, 0],
    },
    AqiCategory {
        level: AqiLevel::Moderate,
        label: "Moderate",
        pm_lower: 12.1,
        pm_upper: 35.4,
        index_lower: 51,
        index_upper: 100,
        color: [255, 255, 0],
    },
    AqiCategory {
        level: AqiLevel::UnhealthySensitive,
        label: "Unhealthy for Sensitive Groups",
        pm_lower: 35.5,
        pm_upper: 55.4,
        index_lower: 101,
        index_upper: 150,
        color: [255, 126, 0],
    },
    AqiCategory {
        level: AqiLevel::Unhealthy,
        label: "Unhealthy",
        pm_lower: 55.5,
        pm_upper: 150.4,
        index_lower: 151,
        index_upper: 200,
        color: [255, 0, 0],
    },
    AqiCategory {
        level: AqiLevel::VeryUnhealthy,
        label: "Very Unhealthy",
        pm_lower: 150.5,
        pm_upper: 250.4,
        index_lower: 201,
        index_upper: 300,
        color: [143, 63, 151],
    },
    AqiCategory {
        level: AqiLevel::Hazardous,
        label: "Hazardous",
        pm_lower: 250.5,
        pm_upper: 500.4,
        index_lower: 301,
        index_upper: 500,
        color: [126, 0, 35],
    },
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AqiClass {
    pub category: AqiCategory,
    /// Above the last tabulated bound; reported as Hazardous.
    pub out_of_table: bool,
}

fn lookup(pm: f64) -> Option<&'static AqiCategory> {
    AQI_TABLE.iter().find(|c| pm >= c.pm_lower && pm <= c.pm_upper)
}

/// Category of a PM2.5 concentration. Bounds are closed as tabulated; a
/// value falling between two bounds (e.g. 12.04) is rounded to one decimal
/// first.
pub fn classify_aqi(pm25: f64) -> Result<AqiClass> {
    if pm25.is_nan() {
        return Err(PipelineError::Data("PM2.5 value is NaN".into()));
    }
    if pm25 < 0.0 {
        return Err(PipelineError::Data(format!("negative PM2.5 value {pm25}")));
    }
    let last = AQI_TABLE[AQI_TABLE.len() - 1];
    let category = lookup(pm25).or_else(|| lookup((pm25 * 10.0).round() / 10.0));
    Ok(match category {
        Some(c) => AqiClass {
            category: *c,
            out_of_table: false,
        },
        None => AqiClass {
            category: last,
            out_of_table: true,
        },
    })
}
