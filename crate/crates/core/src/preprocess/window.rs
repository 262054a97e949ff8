use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::RasterGrid;

/// Minimum number of valid cells in a 3x3 window.
pub const WINDOW_MIN_VALID: usize = 3;
/// Window sample standard deviation must stay strictly below this.
pub const WINDOW_MAX_STD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowRejection {
    TooFewValid,
    TooVariable,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowStats {
    /// Mean of the valid cells when both gates pass.
    pub aod: Option<f64>,
    pub n_valid: usize,
    /// Sample (n - 1) standard deviation of the valid cells; needs two cells.
    pub stdev: Option<f64>,
    pub mean: Option<f64>,
}

impl WindowStats {
    pub fn rejection(&self) -> Option<WindowRejection> {
        if self.n_valid < WINDOW_MIN_VALID {
            Some(WindowRejection::TooFewValid)
        } else if self.aod.is_none() {
            Some(WindowRejection::TooVariable)
        } else {
            None
        }
    }
}

fn window_stats(values: &[f64]) -> WindowStats {
    let n = values.len();
    let mean = (n > 0).then(|| values.iter().sum::<f64>() / n as f64);
    let stdev = mean.filter(|_| n >= 2).map(|m| {
        let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
        (ss / (n - 1) as f64).sqrt()
    });
    let pass = n >= WINDOW_MIN_VALID && stdev.is_some_and(|s| s < WINDOW_MAX_STD);
    WindowStats {
        aod: if pass { mean } else { None },
        n_valid: n,
        stdev,
        mean,
    }
}

/// 3x3 neighbourhood statistics around a cell. Cells outside the grid
/// count as missing.
pub fn extract_window_at(grid: &RasterGrid, row: usize, col: usize) -> WindowStats {
    let mut vals = Vec::with_capacity(9);
    for dr in -1isize..=1 {
        for dc in -1isize..=1 {
            if let Some(v) = grid.get_signed(row as isize + dr, col as isize + dc) {
                vals.push(v);
            }
        }
    }
    window_stats(&vals)
}

/// [`extract_window_at`] for the cell containing `(lat, lon)`.
pub fn extract_window(grid: &RasterGrid, lat: f64, lon: f64) -> Result<WindowStats> {
    let (r, c) = grid.locate(lat, lon).ok_or_else(|| {
        Error::InvalidArgument(format!("({lat}, {lon}) lies outside raster {}", grid.band))
    })?;
    Ok(extract_window_at(grid, r, c))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdjacencyClass {
    Normal,
    Clear,
    Other,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CloudClass {
    Clear,
    PossiblyCloudy,
    Other,
}

/// Per-cell QA classes.
///
/// Integer QA codes: 0 = both masks acceptable, 1 = adjacency acceptable
/// only, 2 = cloud acceptable only, 3 = neither.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaFlags {
    pub adjacency: AdjacencyClass,
    pub cloud: CloudClass,
}

impl QaFlags {
    pub fn from_code(code: i64) -> Option<Self> {
        use AdjacencyClass as A;
        use CloudClass as C;
        let (adjacency, cloud) = match code {
            0 => (A::Normal, C::Clear),
            1 => (A::Normal, C::Other),
            2 => (A::Other, C::Clear),
            3 => (A::Other, C::Other),
            _ => return None,
        };
        Some(QaFlags { adjacency, cloud })
    }

    pub fn code(&self) -> i64 {
        let adj_ok = self.adjacency != AdjacencyClass::Other;
        let cloud_ok = self.cloud != CloudClass::Other;
        match (adj_ok, cloud_ok) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        }
    }

    pub fn is_best(&self) -> bool {
        matches!(self.adjacency, AdjacencyClass::Normal | AdjacencyClass::Clear)
            && matches!(self.cloud, CloudClass::Clear | CloudClass::PossiblyCloudy)
    }
}

/// Fraction of best-quality cells in a 3x3 window; missing cells count
/// against it and the denominator is always 9.
pub fn compute_uncertainty(window: &[Option<QaFlags>; 9]) -> f64 {
    let best = window.iter().filter(|f| f.is_some_and(|q| q.is_best())).count();
    best as f64 / 9.0
}

fn qa_at(qa: &RasterGrid, row: isize, col: isize) -> Option<QaFlags> {
    qa.get_signed(row, col)
        .and_then(|v| QaFlags::from_code(v.round() as i64))
}

/// [`compute_uncertainty`] on the QA raster window centred at a cell.
pub fn uncertainty_at(qa: &RasterGrid, row: usize, col: usize) -> f64 {
    let mut window = [None; 9];
    let mut k = 0;
    for dr in -1isize..=1 {
        for dc in -1isize..=1 {
            window[k] = qa_at(qa, row as isize + dr, col as isize + dc);
            k += 1;
        }
    }
    compute_uncertainty(&window)
}

/// Strict QA filtering: masks every AOD cell whose QA class is not best.
pub fn mask_by_qa(aod: &RasterGrid, qa: &RasterGrid) -> Result<RasterGrid> {
    if !aod.is_aligned_with(qa) {
        return Err(Error::Schema("AOD and QA grids are not aligned".into()));
    }
    let mut out = aod.clone();
    for r in 0..aod.nrows {
        for c in 0..aod.ncols {
            let ok = qa_at(qa, r as isize, c as isize).is_some_and(|q| q.is_best());
            if !ok {
                out.set(r, c, None);
            }
        }
    }
    Ok(out)
}
