//! Synthetic data: a tabular benchmark and a full station/raster scene.
//!
//! Both draw features from the same marginal model, loosely matched to the
//! ranges of the fourteen inputs over a city-sized domain, and share the
//! closed-form target [`target_function`].

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use aodforest::data::{Dataset, FeatureSchema, Sample};
use aodforest::preprocess::uncertainty_at;
use aodforest::raster::{band_path, RasterGrid};
use aodforest::rng;
use chrono::{Datelike, Duration, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::prepare::{AOD_AQUA, AOD_TERRA, MET_BANDS, QA_BAND};

/// Noise standard deviation of the standard benchmark.
pub const BENCHMARK_NOISE_SD: f64 = 8.0;
pub const BENCHMARK_ROWS: usize = 20_000;
pub const BENCHMARK_SEED: u64 = 42;

/// Seasonal phase: 1 in mid January, -1 in mid July.
fn season(doy: f64) -> f64 {
    (2.0 * PI * (doy - 15.0) / 365.0).cos()
}

/// Noise-free PM2.5 (µg/m³) for a feature vector in canonical order.
///
/// `f = 12 + 30 aod (1 + 3 (rh - 0.69)) + 20 exp(-pblh/400) + 7 s
///      + 6 cos(wd - 0.8) exp(-ws/2) + 6 tanh((aod - 0.2)/0.04)
///      + 12 exp(-((lat - 35.76)^2 + (lon - 51.45)^2)/0.002)
///      + 4 sin(pi (t - 275)/12) + 3 u aod/0.17`
///
/// with `s` the seasonal phase of the day of year.
pub fn target_function(f: &[f64]) -> f64 {
    let [aod, u, lat, lon, t, _dt, pblh, _sp, _lai, ws, wd, _uv, rh, doy] = f[..14] else {
        unreachable!("slice has 14 elements")
    };
    12.0 + 30.0 * aod * (1.0 + 3.0 * (rh - 0.69))
        + 20.0 * (-pblh / 400.0).exp()
        + 7.0 * season(doy)
        + 6.0 * (wd - 0.8).cos() * (-ws / 2.0).exp()
        + 6.0 * ((aod - 0.2) / 0.04).tanh()
        + 12.0 * (-((lat - 35.76).powi(2) + (lon - 51.45).powi(2)) / 0.002).exp()
        + 4.0 * (PI * (t - 275.0) / 12.0).sin()
        + 3.0 * u * aod / 0.17
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("valid normal").sample(rng)
}

fn gamma(rng: &mut ChaCha8Rng, shape: f64, scale: f64) -> f64 {
    Gamma::new(shape, scale).expect("valid gamma").sample(rng)
}

/// Day-level values of the non-spatial features.
struct DayDraw {
    t: f64,
    dt_gap: f64,
    pblh: f64,
    sp: f64,
    lai: f64,
    ws: f64,
    wd: f64,
    uv: f64,
    rh: f64,
    aod: f64,
}

fn draw_day(rng: &mut ChaCha8Rng, doy: f64) -> DayDraw {
    let s = season(doy);
    DayDraw {
        t: 289.56 - 9.0 * s + normal(rng, 0.0, 4.0),
        dt_gap: gamma(rng, 4.0, 4.5),
        pblh: (normal(rng, 600f64.ln(), 0.5).exp() * (1.0 - 0.3 * s)).clamp(27.75, 1981.97),
        sp: normal(rng, 1.81, 0.27),
        lai: normal(rng, 0.5, 0.01),
        ws: gamma(rng, 14.0, 0.13).clamp(0.7, 4.91),
        wd: rng.random_range(-PI..PI) * 0.75,
        uv: (100_547.0 - 30_000.0 * s + normal(rng, 0.0, 12_000.0)).clamp(33_686.0, 139_511.0),
        rh: Beta::<f64>::new(8.0, 3.6).expect("valid beta").sample(rng).clamp(0.41, 0.94),
        aod: normal(rng, 0.15f64.ln(), 0.45).exp().clamp(0.01, 0.88),
    }
}

/// The tabular benchmark: `rows` independent draws with additive Gaussian
/// noise. Returns the dataset and the noise-free targets.
pub fn benchmark_dataset(rows: usize, noise_sd: f64, seed: u64) -> (Dataset, Vec<f64>) {
    let mut r = rng::stream(seed, &[0xBE4C]);
    let mut samples = Vec::with_capacity(rows);
    let mut truth = Vec::with_capacity(rows);
    for _ in 0..rows {
        let doy = r.random_range(1..=365) as f64;
        let lat = r.random_range(35.60..35.80);
        let lon = r.random_range(51.24..51.51);
        let d = draw_day(&mut r, doy);
        let u = r.random_range(0..=9) as f64 / 9.0;
        let f = vec![
            d.aod, u, lat, lon, d.t, d.t - d.dt_gap, d.pblh, d.sp, d.lai, d.ws, d.wd, d.uv, d.rh, doy,
        ];
        let clean = target_function(&f);
        let noisy = clean + if noise_sd > 0.0 { normal(&mut r, 0.0, noise_sd) } else { 0.0 };
        truth.push(clean);
        samples.push(Sample::new(f, Some(noisy)));
    }
    let ds = Dataset::with_rows(FeatureSchema::standard(), samples).expect("rows match the schema");
    (ds, truth)
}

/// Smooth random field on (lon, lat): a sum of plane waves with
/// wavelengths between 0.1 and 0.4 degrees, roughly unit variance.
struct SmoothField {
    waves: Vec<(f64, f64, f64)>,
}

impl SmoothField {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let waves = (0..4)
            .map(|_| {
                let wavelength = rng.random_range(0.1..0.4);
                let angle = rng.random_range(0.0..PI);
                let k = 2.0 * PI / wavelength;
                (k * angle.cos(), k * angle.sin(), rng.random_range(0.0..2.0 * PI))
            })
            .collect();
        SmoothField { waves }
    }

    fn at(&self, lon: f64, lat: f64) -> f64 {
        let s: f64 = self
            .waves
            .iter()
            .map(|&(kx, ky, ph)| (kx * lon + ky * lat + ph).cos())
            .sum();
        s / (self.waves.len() as f64 / 2.0).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub n_stations: usize,
    pub start_date: NaiveDate,
    pub n_days: usize,
    pub ncols: usize,
    pub nrows: usize,
    pub xll: f64,
    pub yll: f64,
    pub cellsize: f64,
    /// Daily station noise (µg/m³).
    pub noise_sd: f64,
    /// Fraction of fully valid AOD windows that pass the dispersion gate.
    pub window_pass_rate: f64,
    pub terra_missing: f64,
    pub aqua_missing: f64,
    /// Probability that a QA cell is best quality.
    pub qa_best: f64,
    pub hourly_missing: f64,
    /// Probability that an hourly RH reading is saturated (100%).
    pub saturated_rh: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            n_stations: 23,
            start_date: NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date"),
            n_days: 365,
            ncols: 27,
            nrows: 20,
            xll: 51.24,
            yll: 35.60,
            cellsize: 0.01,
            noise_sd: BENCHMARK_NOISE_SD,
            window_pass_rate: 0.9,
            terra_missing: 0.1,
            aqua_missing: 0.15,
            qa_best: 0.8,
            hourly_missing: 0.05,
            saturated_rh: 0.002,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        if self.n_stations == 0 || self.n_days == 0 || self.ncols < 3 || self.nrows < 3 {
            return Err(PipelineError::Config(
                "scene needs stations, days and at least a 3x3 grid".into(),
            ));
        }
        if !(self.cellsize > 0.0 && self.noise_sd >= 0.0) {
            return Err(PipelineError::Config("scene cellsize must be > 0 and noise >= 0".into()));
        }
        if !(self.window_pass_rate > 0.0 && self.window_pass_rate <= 1.0)
            || ![self.terra_missing, self.aqua_missing, self.qa_best, self.hourly_missing, self.saturated_rh]
                .into_iter()
                .all(prob)
        {
            return Err(PipelineError::Config("scene probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Per-cell spike probability giving `window_pass_rate` for nine cells.
    pub fn spike_probability(&self) -> f64 {
        1.0 - self.window_pass_rate.powf(1.0 / 9.0)
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        (0..self.n_days)
            .map(|i| self.start_date + Duration::days(i as i64))
            .collect()
    }
}


#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SceneSummary {
    pub stations: usize,
    pub days: usize,
    pub hourly_rows: usize,
    pub raster_files: usize,
}

struct Station {
    id: String,
    lat: f64,
    lon: f64,
}

/// Latent daily fields. Values at any location come from the day draw plus
/// smooth spatial anomalies.
struct DayFields {
    draw: DayDraw,
    fields: Vec<SmoothField>,
}

impl DayFields {
    /// Latent met values in `MET_BANDS` order and latent AOD at a location.
    fn met_at(&self, lon: f64, lat: f64) -> ([f64; 9], f64) {
        let d = &self.draw;
        let f = |i: usize| self.fields[i].at(lon, lat);
        let t = d.t + 1.5 * f(0);
        let met = [
            t,
            t - (d.dt_gap + 0.8 * f(1)).max(0.1),
            (d.pblh * (0.15 * f(2)).exp()).clamp(27.75, 1981.97),
            d.sp + 0.05 * f(3),
            d.lai + 0.01 * f(4),
            (d.ws + 0.3 * f(5)).clamp(0.7, 4.91),
            d.wd + 0.2 * f(6),
            (d.uv + 3000.0 * f(7)).clamp(33_686.0, 139_511.0),
            (d.rh + 0.03 * f(8)).clamp(0.41, 0.94),
        ];
        let aod = (d.aod * (0.25 * f(9)).exp()).clamp(0.01, 0.88);
        (met, aod)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    aodforest::raster::write_atomic(path, |w| {
        use std::io::Write;
        w.write_all(text.as_bytes())?;
        Ok(())
    })?;
    Ok(())
}

/// Writes `stations.csv`, `rasters/<band>_<date>.asc` and `truth.csv`
/// under `out_dir`.
///
/// AOD cells carry sensor noise, independent per-sensor gaps and spikes of
/// +1.6 to +2.4 shared by both sensors; a single spike pushes a window's
/// standard deviation above the gate. `truth.csv` holds the latent feature
/// values at each station-day with the noise-free target.
pub fn generate_scene(cfg: &SceneConfig, seed: u64, out_dir: &Path) -> Result<SceneSummary> {
    cfg.validate()?;
    let raster_dir = out_dir.join("rasters");
    fs::create_dir_all(&raster_dir).map_err(|e| PipelineError::io(&raster_dir, e))?;
    let top = cfg.yll + cfg.nrows as f64 * cfg.cellsize;
    let right = cfg.xll + cfg.ncols as f64 * cfg.cellsize;

    let mut srng = rng::stream(seed, &[0x57A7]);
    let stations: Vec<Station> = (0..cfg.n_stations)
        .map(|i| Station {
            id: format!("S{:02}", i + 1),
            lat: srng.random_range(cfg.yll + cfg.cellsize..top - cfg.cellsize),
            lon: srng.random_range(cfg.xll + cfg.cellsize..right - cfg.cellsize),
        })
        .collect();

    let template = RasterGrid::new("", cfg.ncols, cfg.nrows, cfg.xll, cfg.yll, cfg.cellsize);
    let q_spike = cfg.spike_probability();
    let mut hourly = String::from("station_id,lat,long,timestamp,pm25,rh_percent\n");
    let mut truth_rows = Vec::new();
    let mut hourly_rows = 0;
    let mut raster_files = 0;

    for (day_index, date) in cfg.dates().into_iter().enumerate() {
        let mut r = rng::stream(seed, &[0xDA7, day_index as u64]);
        let doy = date.ordinal() as f64;
        let day = DayFields {
            draw: draw_day(&mut r, doy),
            fields: (0..10).map(|_| SmoothField::new(&mut r)).collect(),
        };

        let mut met_grids: Vec<RasterGrid> = MET_BANDS.iter().map(|b| template.like(b)).collect();
        let mut terra = template.like(AOD_TERRA);
        let mut aqua = template.like(AOD_AQUA);
        let mut qa = template.like(QA_BAND);
        for row in 0..cfg.nrows {
            for col in 0..cfg.ncols {
                let (lat, lon) = template.cell_center(row, col);
                let (met, aod) = day.met_at(lon, lat);
                for (g, v) in met_grids.iter_mut().zip(met) {
                    g.set(row, col, Some(v));
                }
                let spike = if r.random::<f64>() < q_spike {
                    r.random_range(1.6..2.4)
                } else {
                    0.0
                };
                let observed = aod + spike;
                let t = (observed + normal(&mut r, 0.0, 0.01)).max(0.0);
                let a = (0.92 * observed + 0.01 + normal(&mut r, 0.0, 0.015)).max(0.0);
                let t_missing = r.random::<f64>() < cfg.terra_missing;
                let a_missing = r.random::<f64>() < cfg.aqua_missing;
                terra.set(row, col, (!t_missing).then_some(t));
                aqua.set(row, col, (!a_missing).then_some(a));
                let code = if r.random::<f64>() < cfg.qa_best {
                    0.0
                } else {
                    r.random_range(1..=3) as f64
                };
                qa.set(row, col, Some(code));
            }
        }
        for g in met_grids.iter().chain([&terra, &aqua, &qa]) {
            g.write_ascii(band_path(&raster_dir, &g.band, date))?;
            raster_files += 1;
        }

        for st in &stations {
            let (met, aod) = day.met_at(st.lon, st.lat);
            let (row, col) = template.locate(st.lat, st.lon).expect("stations lie inside the grid");
            let u = uncertainty_at(&qa, row, col);
            let mut features = vec![aod, u, st.lat, st.lon];
            features.extend(met);
            features.push(doy);
            let clean = target_function(&features);
            let daily = (clean + if cfg.noise_sd > 0.0 { normal(&mut r, 0.0, cfg.noise_sd) } else { 0.0 }).max(1.0);
            let mut wiggle: Vec<f64> = (0..24).map(|_| normal(&mut r, 0.0, 0.1)).collect();
            let mean = wiggle.iter().sum::<f64>() / 24.0;
            wiggle.iter_mut().for_each(|w| *w -= mean);
            let rh_percent = met[8] * 100.0;
            for (h, w) in wiggle.iter().enumerate() {
                let corrected = daily * (1.0 + w).max(0.05);
                let saturated = r.random::<f64>() < cfg.saturated_rh;
                let rh = if saturated { 100.0 } else { rh_percent };
                let pm = if r.random::<f64>() < cfg.hourly_missing {
                    String::new()
                } else {
                    format!("{:.4}", corrected * (1.0 - rh_percent / 100.0))
                };
                hourly.push_str(&format!(
                    "{},{:.6},{:.6},{}T{:02}:00:00,{},{:.4}\n",
                    st.id, st.lat, st.lon, date.format("%Y-%m-%d"), h, pm, rh
                ));
                hourly_rows += 1;
            }
            let mut s = Sample::new(features, Some(clean));
            s.station_id = Some(st.id.clone());
            s.date = Some(date);
            truth_rows.push(s);
        }
    }
    write_text(&out_dir.join("stations.csv"), &hourly)?;
    let truth = Dataset::with_rows(FeatureSchema::standard(), truth_rows)?;
    truth.write_csv(out_dir.join("truth.csv"))?;
    Ok(SceneSummary {
        stations: stations.len(),
        days: cfg.n_days,
        hourly_rows,
        raster_files,
    })
}
