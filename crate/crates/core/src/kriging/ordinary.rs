use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use rayon::prelude::*;

use super::distance;
use super::variogram::VariogramModel;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct KrigingSolution {
    pub value: f64,
    pub variance: f64,
    pub weights: Vec<f64>,
    pub lagrange: f64,
}

/// Ordinary kriging system for a fixed sample set. The LU factorisation of
/// the bordered semivariance matrix is shared by every target.
#[derive(Clone, Debug)]
pub struct OrdinaryKriging {
    locations: Vec<(f64, f64)>,
    values: Vec<f64>,
    model: VariogramModel,
    /// Zero for a flat (all-zero) variogram, else one.
    variance_scale: f64,
    lu: LU<f64, Dyn, Dyn>,
}

/// Merges samples at identical locations into their mean value.
fn deduplicate(samples: &[(f64, f64, f64)]) -> (Vec<(f64, f64)>, Vec<f64>) {
    let mut seen: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    let mut locs = Vec::with_capacity(samples.len());
    let mut sums: Vec<(f64, usize)> = Vec::with_capacity(samples.len());
    for &(x, y, v) in samples {
        // +0.0 normalises negative zero so it matches positive zero
        let key = ((x + 0.0).to_bits(), (y + 0.0).to_bits());
        match seen.get(&key) {
            Some(&i) => {
                sums[i].0 += v;
                sums[i].1 += 1;
            }
            None => {
                seen.insert(key, locs.len());
                locs.push((x, y));
                sums.push((v, 1));
            }
        }
    }
    if locs.len() < samples.len() {
        log::warn!(
            "kriging: {} duplicate sample locations averaged",
            samples.len() - locs.len()
        );
    }
    (locs, sums.into_iter().map(|(s, n)| s / n as f64).collect())
}

impl OrdinaryKriging {
    pub fn new(samples: &[(f64, f64, f64)], model: VariogramModel) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("kriging samples".into()));
        }
        if samples.iter().any(|s| !(s.0.is_finite() && s.1.is_finite() && s.2.is_finite())) {
            return Err(Error::NonFinite("kriging samples".into()));
        }
        let (locations, values) = deduplicate(samples);
        let n = locations.len();
        // Weights do not change when the variogram is scaled, so a flat
        // variogram is solved with a unit partial sill and zero variance.
        let (model, variance_scale) = if model.sill() > 0.0 {
            (model, 1.0)
        } else {
            (VariogramModel { psill: 1.0, ..model }, 0.0)
        };
        let a = DMatrix::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
            (true, true) => model.gamma(distance(locations[i], locations[j])),
            (false, false) => 0.0,
            _ => 1.0,
        });
        let lu = a.lu();
        if !lu.is_invertible() {
            return Err(Error::Singular("ordinary kriging matrix".into()));
        }
        Ok(OrdinaryKriging {
            locations,
            values,
            model,
            variance_scale,
            lu,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.locations.len()
    }

    pub fn solve(&self, x: f64, y: f64) -> Result<KrigingSolution> {
        let n = self.locations.len();
        let gamma0: Vec<f64> = self
            .locations
            .iter()
            .map(|&l| self.model.gamma(distance(l, (x, y))))
            .collect();
        let b = DVector::from_iterator(n + 1, gamma0.iter().copied().chain(std::iter::once(1.0)));
        let sol = self
            .lu
            .solve(&b)
            .ok_or_else(|| Error::Singular("ordinary kriging matrix".into()))?;
        let weights: Vec<f64> = sol.iter().take(n).copied().collect();
        let lagrange = sol[n];
        // centring on the first value makes a constant field come back exactly
        let base = self.values[0];
        let value = base
            + weights
                .iter()
                .zip(&self.values)
                .map(|(w, v)| w * (v - base))
                .sum::<f64>();
        let variance = self.variance_scale
            * (weights.iter().zip(&gamma0).map(|(w, g)| w * g).sum::<f64>() + lagrange);
        if !(value.is_finite() && variance.is_finite()) {
            return Err(Error::NonFinite("kriging solution".into()));
        }
        Ok(KrigingSolution {
            value,
            variance,
            weights,
            lagrange,
        })
    }

    /// `(value, variance)` per target, solved in parallel.
    pub fn predict(&self, targets: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
        targets
            .par_iter()
            .map(|&(x, y)| self.solve(x, y).map(|s| (s.value, s.variance)))
            .collect()
    }
}

pub fn krige_predict(
    samples: &[(f64, f64, f64)],
    model: &VariogramModel,
    targets: &[(f64, f64)],
) -> Result<Vec<(f64, f64)>> {
    OrdinaryKriging::new(samples, *model)?.predict(targets)
}

/// Kriging from the `k` nearest samples of each target (ties by sample
/// order). Falls back to the global system when `k` covers every sample.
pub fn krige_predict_local(
    samples: &[(f64, f64, f64)],
    model: &VariogramModel,
    targets: &[(f64, f64)],
    k: usize,
) -> Result<Vec<(f64, f64)>> {
    if k == 0 {
        return Err(Error::InvalidArgument("neighbourhood size must be at least 1".into()));
    }
    let (locs, values) = deduplicate(samples);
    if locs.is_empty() {
        return Err(Error::Empty("kriging samples".into()));
    }
    let merged: Vec<(f64, f64, f64)> = locs.iter().zip(&values).map(|(l, &v)| (l.0, l.1, v)).collect();
    if k >= merged.len() {
        return krige_predict(&merged, model, targets);
    }
    targets
        .par_iter()
        .map(|&t| {
            let mut order: Vec<(f64, usize)> = merged
                .iter()
                .enumerate()
                .map(|(i, s)| (distance((s.0, s.1), t), i))
                .collect();
            order.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut near: Vec<usize> = order[..k].iter().map(|o| o.1).collect();
            near.sort_unstable();
            let subset: Vec<(f64, f64, f64)> = near.iter().map(|&i| merged[i]).collect();
            let s = OrdinaryKriging::new(&subset, *model)?.solve(t.0, t.1)?;
            Ok((s.value, s.variance))
        })
        .collect()
}
