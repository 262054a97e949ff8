use serde::{Deserialize, Serialize};

use super::distance;
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariogramKind {
    Spherical,
    Exponential,
    Gaussian,
}

impl VariogramKind {
    pub const ALL: [VariogramKind; 3] = [
        VariogramKind::Spherical,
        VariogramKind::Exponential,
        VariogramKind::Gaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariogramKind::Spherical => "spherical",
            VariogramKind::Exponential => "exponential",
            VariogramKind::Gaussian => "gaussian",
        }
    }

    /// Normalised structure function in `[0, 1]` at separation `h` for range
    /// `r`. Exponential and gaussian use the practical range, reaching 95% of
    /// the partial sill at `h = r`.
    fn shape(self, h: f64, r: f64) -> f64 {
        let t = h / r;
        match self {
            VariogramKind::Spherical => {
                if t < 1.0 {
                    1.5 * t - 0.5 * t * t * t
                } else {
                    1.0
                }
            }
            VariogramKind::Exponential => 1.0 - (-3.0 * t).exp(),
            VariogramKind::Gaussian => 1.0 - (-3.0 * t * t).exp(),
        }
    }
}

impl std::str::FromStr for VariogramKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VariogramKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variogram kind {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariogramModel {
    pub kind: VariogramKind,
    pub nugget: f64,
    pub psill: f64,
    pub range: f64,
}

impl VariogramModel {
    pub fn new(kind: VariogramKind, nugget: f64, psill: f64, range: f64) -> Result<Self> {
        if !(nugget >= 0.0 && psill >= 0.0 && range > 0.0 && (nugget + psill + range).is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "variogram needs nugget >= 0, psill >= 0, range > 0 (got {nugget}, {psill}, {range})"
            )));
        }
        Ok(VariogramModel {
            kind,
            nugget,
            psill,
            range,
        })
    }

    /// Semivariance at separation `h`; zero at `h = 0`.
    pub fn gamma(&self, h: f64) -> f64 {
        if h <= 0.0 {
            0.0
        } else {
            self.nugget + self.psill * self.kind.shape(h, self.range)
        }
    }

    pub fn sill(&self) -> f64 {
        self.nugget + self.psill
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariogramBin {
    /// Mean separation of the pairs in the bin.
    pub lag: f64,
    pub semivariance: f64,
    pub pairs: usize,
}

/// Half the largest pairwise distance.
pub fn default_max_dist(points: &[(f64, f64, f64)]) -> f64 {
    let mut max = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            max = max.max(distance((a.0, a.1), (b.0, b.1)));
        }
    }
    max / 2.0
}

/// Binned semivariances `0.5 (v_i - v_j)^2` over pairs with separation in
/// `(0, max_dist]`, using `n_bins` equal-width bins. Empty bins are omitted.
pub fn empirical_variogram(
    points: &[(f64, f64, f64)],
    n_bins: usize,
    max_dist: f64,
) -> Result<Vec<VariogramBin>> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "variogram needs at least 2 points, got {}",
            points.len()
        )));
    }
    if n_bins == 0 || !(max_dist > 0.0 && max_dist.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "variogram needs n_bins >= 1 and max_dist > 0 (got {n_bins}, {max_dist})"
        )));
    }
    if points.iter().any(|p| !(p.0.is_finite() && p.1.is_finite() && p.2.is_finite())) {
        return Err(Error::NonFinite("variogram points".into()));
    }
    if points.iter().all(|p| p.0 == points[0].0 && p.1 == points[0].1) {
        return Err(Error::InvalidArgument("all variogram points coincide".into()));
    }
    let width = max_dist / n_bins as f64;
    let mut acc = vec![(0.0, 0.0, 0usize); n_bins];
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let h = distance((a.0, a.1), (b.0, b.1));
            if h <= 0.0 || h > max_dist {
                continue;
            }
            let k = ((h / width) as usize).min(n_bins - 1);
            let d = a.2 - b.2;
            acc[k].0 += h;
            acc[k].1 += 0.5 * d * d;
            acc[k].2 += 1;
        }
    }
    Ok(acc
        .into_iter()
        .filter(|b| b.2 > 0)
        .map(|(h, s, n)| VariogramBin {
            lag: h / n as f64,
            semivariance: s / n as f64,
            pairs: n,
        })
        .collect())
}

struct Fit {
    nugget: f64,
    psill: f64,
    objective: f64,
}

/// Best non-negative (nugget, psill) for a fixed range: a two-variable
/// weighted least squares with the boundary cases checked explicitly.
fn fit_sills(bins: &[VariogramBin], kind: VariogramKind, range: f64) -> Fit {
    let (mut sw, mut swg, mut swgg, mut sws, mut swgs) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let g: Vec<f64> = bins.iter().map(|b| kind.shape(b.lag, range)).collect();
    for (b, &gi) in bins.iter().zip(&g) {
        let w = b.pairs as f64;
        sw += w;
        swg += w * gi;
        swgg += w * gi * gi;
        sws += w * b.semivariance;
        swgs += w * gi * b.semivariance;
    }
    let objective = |a: f64, c: f64| -> f64 {
        bins.iter()
            .zip(&g)
            .map(|(b, &gi)| b.pairs as f64 * (a + c * gi - b.semivariance).powi(2))
            .sum()
    };
    let mut candidates = vec![(0.0, 0.0), ((sws / sw).max(0.0), 0.0)];
    if swgg > 0.0 {
        candidates.push((0.0, (swgs / swgg).max(0.0)));
    }
    let det = sw * swgg - swg * swg;
    if det > 1e-12 * sw * swgg {
        let a = (swgg * sws - swg * swgs) / det;
        let c = (sw * swgs - swg * sws) / det;
        if a >= 0.0 && c >= 0.0 {
            candidates.push((a, c));
        }
    }
    candidates
        .into_iter()
        .map(|(a, c)| Fit {
            nugget: a,
            psill: c,
            objective: objective(a, c),
        })
        .fold(None::<Fit>, |best, f| match best {
            Some(b) if b.objective <= f.objective => Some(b),
            _ => Some(f),
        })
        .expect("at least one candidate")
}

/// Pair-weighted least-squares fit of nugget, partial sill and range.
///
/// The sills are solved exactly for each trial range; the range is found by
/// a log-spaced scan followed by golden-section refinement around the best
/// scan point.
pub fn fit_variogram(bins: &[VariogramBin], kind: VariogramKind) -> Result<VariogramModel> {
    let bins: Vec<VariogramBin> = bins.iter().copied().filter(|b| b.pairs > 0).collect();
    if bins.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "variogram fit needs at least 3 non-empty bins, got {}",
            bins.len()
        )));
    }
    if bins.iter().any(|b| !(b.lag > 0.0 && b.lag.is_finite() && b.semivariance.is_finite())) {
        return Err(Error::NonFinite("variogram bins".into()));
    }
    let lag_min = bins.iter().map(|b| b.lag).fold(f64::INFINITY, f64::min);
    let lag_max = bins.iter().map(|b| b.lag).fold(0.0, f64::max);

    const SCAN: usize = 80;
    let (lo, hi) = ((lag_min / 4.0).ln(), (4.0 * lag_max).ln());
    let grid: Vec<f64> = (0..SCAN)
        .map(|k| lo + (hi - lo) * k as f64 / (SCAN - 1) as f64)
        .collect();
    let scores: Vec<f64> = grid
        .iter()
        .map(|&lr| fit_sills(&bins, kind, lr.exp()).objective)
        .collect();
    let mut best_k = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s < scores[best_k] {
            best_k = k;
        }
    }
    let (mut a, mut b) = (grid[best_k.saturating_sub(1)], grid[(best_k + 1).min(SCAN - 1)]);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let f = |lr: f64| fit_sills(&bins, kind, lr.exp()).objective;
    let (mut c, mut d) = (b - inv_phi * (b - a), a + inv_phi * (b - a));
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mut best_lr = if fc <= fd { c } else { d };
    if f(grid[best_k]) < f(best_lr) {
        best_lr = grid[best_k];
    }
    let range = best_lr.exp();
    let fit = fit_sills(&bins, kind, range);
    if fit.objective.is_finite() && range.is_finite() && range > 0.0 {
        return VariogramModel::new(kind, fit.nugget, fit.psill, range);
    }
    let total: f64 = bins.iter().map(|b| b.pairs as f64).sum();
    let sill = bins.iter().map(|b| b.pairs as f64 * b.semivariance).sum::<f64>() / total;
    log::warn!("{} variogram fit failed; falling back to a default model", kind.name());
    VariogramModel::new(kind, 0.0, sill.max(0.0), lag_max / 2.0)
}
