use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::RasterGrid;

/// Boundary-layer normalisation `aod / pblh`; missing when `pblh <= 0`.
pub fn normalize_aod_pblh(aod: f64, pblh: f64) -> Option<f64> {
    (pblh > 0.0 && aod.is_finite() && pblh.is_finite()).then(|| aod / pblh)
}

/// Ordinary least squares `y = slope * x + intercept` with the squared
/// Pearson correlation of the fitted pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

impl LinearFit {
    #[inline]
    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

pub fn fit_linear_1d(pairs: &[(f64, f64)]) -> Result<LinearFit> {
    let n = pairs.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 pairs, got {n}")));
    }
    if pairs.iter().any(|(x, y)| !(x.is_finite() && y.is_finite())) {
        return Err(Error::NonFinite("regression pairs".into()));
    }
    let nf = n as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("constant predictor in regression".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 0.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r2,
        n,
    })
}

/// Inter-sensor regressions in both directions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorRegression {
    /// Predicts Terra AOD from Aqua AOD.
    pub aqua_to_terra: LinearFit,
    /// Predicts Aqua AOD from Terra AOD.
    pub terra_to_aqua: LinearFit,
}

impl SensorRegression {
    pub fn r2(&self) -> f64 {
        self.aqua_to_terra.r2
    }
}

/// Fits both directions from collocated `(terra, aqua)` retrievals.
pub fn fit_sensor_regression(pairs: &[(f64, f64)]) -> Result<SensorRegression> {
    let a_to_t: Vec<(f64, f64)> = pairs.iter().map(|&(t, a)| (a, t)).collect();
    Ok(SensorRegression {
        aqua_to_terra: fit_linear_1d(&a_to_t)?,
        terra_to_aqua: fit_linear_1d(pairs)?,
    })
}

/// Daily AOD from the two sensors. A missing side is filled from the other
/// through the directional regression before averaging.
pub fn merge_daily_aod(
    aod_aqua: Option<f64>,
    aod_terra: Option<f64>,
    fit: &SensorRegression,
) -> Option<f64> {
    match (aod_aqua, aod_terra) {
        (Some(a), Some(t)) => Some(0.5 * (a + t)),
        (Some(a), None) => Some(0.5 * (a + fit.aqua_to_terra.predict(a))),
        (None, Some(t)) => Some(0.5 * (fit.terra_to_aqua.predict(t) + t)),
        (None, None) => None,
    }
}

/// Cell-wise [`merge_daily_aod`] over aligned grids.
pub fn merge_aod_grids(
    aqua: &RasterGrid,
    terra: &RasterGrid,
    fit: &SensorRegression,
) -> Result<RasterGrid> {
    if !aqua.is_aligned_with(terra) {
        return Err(Error::Schema("Aqua and Terra grids are not aligned".into()));
    }
    let mut out = aqua.like("AOD");
    for r in 0..aqua.nrows {
        for c in 0..aqua.ncols {
            out.set(r, c, merge_daily_aod(aqua.get(r, c), terra.get(r, c), fit));
        }
    }
    Ok(out)
}
