use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub mae: f64,
    /// Squared Pearson correlation; absent when either series is constant.
    pub r2: Option<f64>,
    /// Sum of absolute residuals over the sum of observations; absent when
    /// the observations sum to zero.
    pub ape: Option<f64>,
    pub n: usize,
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// RMSE, MAE, squared Pearson R² and APE of predictions against
/// observations, on whatever scale the caller passes.
pub fn compute_metrics(y: &[f64], y_pred: &[f64]) -> Result<MetricsReport> {
    if y.len() != y_pred.len() {
        return Err(Error::dim("metric series", y.len(), y_pred.len()));
    }
    let n = y.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("metrics need at least 2 pairs, got {n}")));
    }
    if y.iter().chain(y_pred).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("metric series".into()));
    }
    let nf = n as f64;
    let (mut sq, mut abs) = (0.0, 0.0);
    for (a, p) in y.iter().zip(y_pred) {
        let r = a - p;
        sq += r * r;
        abs += r.abs();
    }
    let r2 = if is_constant(y) || is_constant(y_pred) {
        None
    } else {
        let my = y.iter().sum::<f64>() / nf;
        let mp = y_pred.iter().sum::<f64>() / nf;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (a, p) in y.iter().zip(y_pred) {
            let (da, dp) = (a - my, p - mp);
            sxy += da * dp;
            sxx += da * da;
            syy += dp * dp;
        }
        Some((sxy * sxy / (sxx * syy)).min(1.0))
    };
    let total: f64 = y.iter().sum();
    Ok(MetricsReport {
        rmse: (sq / nf).sqrt(),
        mae: abs / nf,
        r2,
        ape: (total != 0.0).then(|| abs / total),
        n,
    })
}
