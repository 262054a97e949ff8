use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};

use crate::error::{Error, Result};

/// Humidity correction of a dry-mass PM2.5 reading: `pm / (1 - rh/100)`.
pub fn correct_pm_humidity(pm: f64, rh_percent: f64) -> Result<f64> {
    if !(pm.is_finite() && rh_percent.is_finite()) {
        return Err(Error::NonFinite("PM/RH reading".into()));
    }
    if pm < 0.0 {
        return Err(Error::InvalidArgument(format!("negative PM2.5 reading {pm}")));
    }
    if !(0.0..100.0).contains(&rh_percent) {
        return Err(Error::InvalidArgument(format!(
            "relative humidity {rh_percent}% outside [0, 100)"
        )));
    }
    Ok(pm / (1.0 - rh_percent / 100.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reading {
    pub timestamp: NaiveDateTime,
    pub pm25: Option<f64>,
    pub rh_percent: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationSeries {
    pub station_id: String,
    pub lat: f64,
    pub lon: f64,
    pub readings: Vec<Reading>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CorrectionCounts {
    pub kept: usize,
    pub missing: usize,
    pub rejected: usize,
}

/// Applies the humidity correction to every reading. Readings without PM
/// or RH become missing; readings the correction rejects (RH >= 100) are
/// dropped to missing and counted.
pub fn correct_series(series: &StationSeries) -> (StationSeries, CorrectionCounts) {
    let mut counts = CorrectionCounts::default();
    let readings = series
        .readings
        .iter()
        .map(|r| {
            let pm = match (r.pm25, r.rh_percent) {
                (Some(pm), Some(rh)) => match correct_pm_humidity(pm, rh) {
                    Ok(v) => {
                        counts.kept += 1;
                        Some(v)
                    }
                    Err(e) => {
                        log::debug!("station {} at {}: {e}", series.station_id, r.timestamp);
                        counts.rejected += 1;
                        None
                    }
                },
                _ => {
                    counts.missing += 1;
                    None
                }
            };
            Reading {
                timestamp: r.timestamp,
                pm25: pm,
                rh_percent: r.rh_percent,
            }
        })
        .collect();
    (
        StationSeries {
            readings,
            ..series.clone()
        },
        counts,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct DailySeries {
    pub station_id: String,
    pub lat: f64,
    pub lon: f64,
    /// `None` marks a day with readings but none valid.
    pub days: BTreeMap<NaiveDate, Option<f64>>,
}

/// Mean of the valid PM2.5 readings of each calendar day.
pub fn daily_average(series: &StationSeries) -> DailySeries {
    let mut acc: BTreeMap<NaiveDate, (f64, usize)> = BTreeMap::new();
    for r in &series.readings {
        let e = acc.entry(r.timestamp.date()).or_insert((0.0, 0));
        if let Some(v) = r.pm25.filter(|v| v.is_finite()) {
            e.0 += v;
            e.1 += 1;
        }
    }
    DailySeries {
        station_id: series.station_id.clone(),
        lat: series.lat,
        lon: series.lon,
        days: acc
            .into_iter()
            .map(|(d, (sum, n))| (d, (n > 0).then(|| sum / n as f64)))
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationTable {
    pub stations: Vec<StationSeries>,
    /// RH arrived as a fraction and was multiplied by 100.
    pub rh_converted_from_fraction: bool,
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
        })
}

pub fn read_station_csv<P: AsRef<Path>>(path: P) -> Result<StationTable> {
    StationTable::from_reader(std::fs::File::open(path)?)
}

impl StationTable {
    /// Columns: `station_id,lat,long,timestamp,pm25,rh_percent`.
    ///
    /// When every RH value is at most 1 the column is taken to be a
    /// fraction and converted to percent.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Schema(format!("station CSV lacks column {name:?}")))
        };
        let (c_id, c_lat, c_lon, c_ts, c_pm, c_rh) = (
            col("station_id")?,
            col("lat")?,
            col("long")?,
            col("timestamp")?,
            col("pm25")?,
            col("rh_percent")?,
        );
        let mut by_station: BTreeMap<String, StationSeries> = BTreeMap::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("").trim();
            let num = |i: usize| -> Result<Option<f64>> {
                let s = field(i);
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| {
                        Error::Format(format!("station CSV row {}: bad number {s:?}", line + 1))
                    })
                }
            };
            let id = field(c_id).to_string();
            let lat = num(c_lat)?.ok_or_else(|| Error::Missing(format!("lat, row {}", line + 1)))?;
            let lon = num(c_lon)?.ok_or_else(|| Error::Missing(format!("long, row {}", line + 1)))?;
            let ts = parse_timestamp(field(c_ts)).ok_or_else(|| {
                Error::Format(format!("station CSV row {}: bad timestamp {:?}", line + 1, field(c_ts)))
            })?;
            let entry = by_station.entry(id.clone()).or_insert_with(|| StationSeries {
                station_id: id,
                lat,
                lon,
                readings: Vec::new(),
            });
            entry.readings.push(Reading {
                timestamp: ts,
                pm25: num(c_pm)?,
                rh_percent: num(c_rh)?,
            });
        }
        let mut stations: Vec<StationSeries> = by_station.into_values().collect();
        for s in &mut stations {
            s.readings.sort_by_key(|r| r.timestamp);
        }
        let mut rh_values = stations
            .iter()
            .flat_map(|s| s.readings.iter().filter_map(|r| r.rh_percent))
            .peekable();
        let fractional = rh_values.peek().is_some() && rh_values.all(|v| v <= 1.0);
        if fractional {
            log::info!("station RH values are fractional; converting to percent");
            for s in &mut stations {
                for r in &mut s.readings {
                    r.rh_percent = r.rh_percent.map(|v| v * 100.0);
                }
            }
        }
        Ok(StationTable {
            stations,
            rh_converted_from_fraction: fractional,
        })
    }
}
