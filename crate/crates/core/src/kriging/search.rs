use serde::Serialize;

use super::ordinary::{krige_predict, krige_predict_local};
use super::variogram::{default_max_dist, empirical_variogram, fit_variogram, VariogramKind, VariogramModel, DEFAULT_BINS};
use crate::data::kfold_indices;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KindScore {
    pub kind: VariogramKind,
    /// Fitted on every sample; `None` when the fit failed.
    pub model: Option<VariogramModel>,
    /// Cross-validated RMSE; `None` when any fold failed or CV was skipped.
    pub cv_rmse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KrigingSelection {
    pub kind: VariogramKind,
    pub model: VariogramModel,
    pub scores: Vec<KindScore>,
}

fn fit_points(points: &[(f64, f64, f64)], kind: VariogramKind) -> Result<VariogramModel> {
    let bins = empirical_variogram(points, DEFAULT_BINS, default_max_dist(points))?;
    fit_variogram(&bins, kind)
}

fn cv_rmse(
    samples: &[(f64, f64, f64)],
    kind: VariogramKind,
    folds: &[(Vec<usize>, Vec<usize>)],
    neighbours: Option<usize>,
) -> Result<f64> {
    let mut ss = 0.0;
    for (train, valid) in folds {
        let pts: Vec<_> = train.iter().map(|&i| samples[i]).collect();
        let model = fit_points(&pts, kind)?;
        let targets: Vec<(f64, f64)> = valid.iter().map(|&i| (samples[i].0, samples[i].1)).collect();
        let pred = match neighbours {
            Some(k) => krige_predict_local(&pts, &model, &targets, k)?,
            None => krige_predict(&pts, &model, &targets)?,
        };
        ss += valid
            .iter()
            .zip(&pred)
            .map(|(&i, p)| (p.0 - samples[i].2).powi(2))
            .sum::<f64>();
    }
    Ok((ss / samples.len() as f64).sqrt())
}

/// Chooses the variogram kind with the lowest k-fold cross-validated kriging
/// RMSE. Each fold refits the variogram on its training samples. Scores
/// within 1e-12 of each other keep the earlier candidate. With a single
/// candidate no cross-validation is run.
pub fn kriging_grid_search(
    samples: &[(f64, f64, f64)],
    kinds: &[VariogramKind],
    cv_folds: usize,
    neighbours: Option<usize>,
    seed: u64,
) -> Result<KrigingSelection> {
    if kinds.is_empty() {
        return Err(Error::InvalidArgument("no variogram kinds to search".into()));
    }
    let folds = if kinds.len() > 1 {
        Some(kfold_indices(samples.len(), cv_folds, seed)?)
    } else {
        None
    };
    let mut scores = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let model = fit_points(samples, kind)
            .map_err(|e| log::warn!("{} variogram failed: {e}", kind.name()))
            .ok();
        let cv = match (&folds, model) {
            (Some(f), Some(_)) => cv_rmse(samples, kind, f, neighbours)
                .map_err(|e| log::warn!("{} variogram cross-validation failed: {e}", kind.name()))
                .ok(),
            _ => None,
        };
        scores.push(KindScore {
            kind,
            model,
            cv_rmse: cv,
        });
    }
    let chosen = if kinds.len() == 1 {
        scores[0].model.map(|m| (kinds[0], m))
    } else {
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in scores.iter().enumerate() {
            if let (Some(_), Some(r)) = (s.model, s.cv_rmse) {
                if best.is_none_or(|(_, b)| r < b - 1e-12) {
                    best = Some((i, r));
                }
            }
        }
        best.map(|(i, _)| (scores[i].kind, scores[i].model.expect("scored kinds have a model")))
    };
    let (kind, model) = chosen.ok_or_else(|| Error::InvalidArgument("every variogram kind failed".into()))?;
    Ok(KrigingSelection { kind, model, scores })
}
