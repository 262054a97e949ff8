/// Quantile by linear interpolation between order statistics: position
/// `(n - 1) * p` in the sorted sample. `sorted` must be ascending and non-empty.
pub fn quantile_inclusive(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Inlier interval `[Q1 - IQR, Q3 + IQR]`, or `None` for fewer than four
/// finite values.
pub fn iqr_bounds(values: &[f64]) -> Option<(f64, f64)> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.len() < 4 {
        return None;
    }
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_inclusive(&sorted, 0.25);
    let q3 = quantile_inclusive(&sorted, 0.75);
    let iqr = q3 - q1;
    Some((q1 - iqr, q3 + iqr))
}

/// `true` for inliers. With fewer than four values everything passes.
pub fn iqr_inlier_mask(values: &[f64]) -> Vec<bool> {
    match iqr_bounds(values) {
        Some((lo, hi)) => values.iter().map(|&v| v >= lo && v <= hi).collect(),
        None => {
            log::warn!(
                "IQR filter needs at least 4 values, got {}; passing through",
                values.len()
            );
            values.iter().map(|v| v.is_finite()).collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IqrSplit {
    pub inliers: Vec<f64>,
    pub outliers: Vec<f64>,
    pub bounds: Option<(f64, f64)>,
}

pub fn iqr_filter(values: &[f64]) -> IqrSplit {
    let mask = iqr_inlier_mask(values);
    let (inl, out): (Vec<_>, Vec<_>) = values.iter().zip(&mask).partition(|(_, &keep)| keep);
    IqrSplit {
        inliers: inl.into_iter().map(|(v, _)| *v).collect(),
        outliers: out.into_iter().map(|(v, _)| *v).collect(),
        bounds: iqr_bounds(values),
    }
}
