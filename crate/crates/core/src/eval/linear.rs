use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative size below which a diagonal entry of R marks a dependent column.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

/// Ordinary least squares with intercept.
///
/// Columns and target are centred, which absorbs the intercept, and the
/// centred system is solved by Householder QR. A column whose R diagonal is
/// negligible relative to the largest one is reported as collinear with the
/// columns before it (or constant).
pub fn fit_linear(x: &Array2<f64>, y: &[f64]) -> Result<LinearModel> {
    let (n, d) = x.dim();
    if n != y.len() {
        return Err(Error::dim("linear target length", n, y.len()));
    }
    if n <= d {
        return Err(Error::InvalidArgument(format!(
            "linear regression needs more rows than features ({n} <= {d})"
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear regression input".into()));
    }
    let means: Vec<f64> = (0..d).map(|j| x.column(j).sum() / n as f64).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    if d == 0 {
        return Ok(LinearModel {
            coefficients: vec![],
            intercept: y_mean,
        });
    }
    let a = DMatrix::from_fn(n, d, |i, j| x[[i, j]] - means[j]);
    let mut b = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

    let qr = a.qr();
    let r = qr.r();
    let diag_max = (0..d).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if let Some(j) = (0..d).find(|&i| r[(i, i)].abs() <= RANK_TOL * diag_max || diag_max == 0.0) {
        return Err(Error::RankDeficient(format!(
            "feature column {j} is constant or a linear combination of earlier columns"
        )));
    }
    qr.q_tr_mul(&mut b);
    let rhs = b.rows(0, d).into_owned();
    let beta = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::Singular("triangular factor".into()))?;
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let intercept = y_mean - coefficients.iter().zip(&means).map(|(c, m)| c * m).sum::<f64>();
    if !intercept.is_finite() || coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("linear coefficients".into()));
    }
    Ok(LinearModel {
        coefficients,
        intercept,
    })
}

impl LinearModel {
    pub fn predict_row(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.coefficients.len() {
            return Err(Error::dim("linear input", self.coefficients.len(), x.len()));
        }
        Ok(self.intercept + self.coefficients.iter().zip(x).map(|(c, v)| c * v).sum::<f64>())
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.coefficients.len() {
            return Err(Error::dim("linear input columns", self.coefficients.len(), x.ncols()));
        }
        Ok(x.rows()
            .into_iter()
            .map(|r| self.intercept + r.iter().zip(&self.coefficients).map(|(v, c)| c * v).sum::<f64>())
            .collect())
    }
}
