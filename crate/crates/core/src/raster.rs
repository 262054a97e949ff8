//! Georeferenced grids and ESRI ASCII grid I/O.
//!
//! Rows are stored top (north) first, matching the on-disk order of the
//! ASCII grid format. `x` is longitude and `y` is latitude, both in degrees.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::error::{Error, Result};

pub const DEFAULT_NODATA: f64 = -9999.0;

#[derive(Clone, Debug, PartialEq)]
pub struct RasterGrid {
    pub band: String,
    pub ncols: usize,
    pub nrows: usize,
    /// Longitude of the lower-left corner of the lower-left cell.
    pub xll: f64,
    /// Latitude of the lower-left corner of the lower-left cell.
    pub yll: f64,
    pub cellsize: f64,
    pub nodata: f64,
    values: Vec<Option<f64>>,
}

impl RasterGrid {
    /// A grid with every cell missing.
    pub fn new(band: &str, ncols: usize, nrows: usize, xll: f64, yll: f64, cellsize: f64) -> Self {
        RasterGrid {
            band: band.to_string(),
            ncols,
            nrows,
            xll,
            yll,
            cellsize,
            nodata: DEFAULT_NODATA,
            values: vec![None; ncols * nrows],
        }
    }

    /// Empty grid sharing the geometry of `self`.
    pub fn like(&self, band: &str) -> Self {
        let mut g = RasterGrid::new(band, self.ncols, self.nrows, self.xll, self.yll, self.cellsize);
        g.nodata = self.nodata;
        g
    }

    pub fn from_values(
        band: &str,
        ncols: usize,
        nrows: usize,
        xll: f64,
        yll: f64,
        cellsize: f64,
        values: Vec<Option<f64>>,
    ) -> Result<Self> {
        if values.len() != ncols * nrows {
            return Err(Error::dim("raster values", ncols * nrows, values.len()));
        }
        let mut g = RasterGrid::new(band, ncols, nrows, xll, yll, cellsize);
        g.values = values;
        Ok(g)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.ncols + col]
    }

    /// Like [`get`](Self::get) but out-of-grid positions read as missing.
    pub fn get_signed(&self, row: isize, col: isize) -> Option<f64> {
        if row < 0 || col < 0 || row as usize >= self.nrows || col as usize >= self.ncols {
            None
        } else {
            self.get(row as usize, col as usize)
        }
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: Option<f64>) {
        self.values[row * self.ncols + col] = value.filter(|v| v.is_finite());
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn n_valid(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }

    /// (lat, long) of a cell center.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let lon = self.xll + (col as f64 + 0.5) * self.cellsize;
        let lat = self.yll + ((self.nrows - 1 - row) as f64 + 0.5) * self.cellsize;
        (lat, lon)
    }

    /// Cell containing (lat, long), or `None` outside the grid.
    pub fn locate(&self, lat: f64, lon: f64) -> Option<(usize, usize)> {
        let fx = ((lon - self.xll) / self.cellsize).floor();
        let fy = ((lat - self.yll) / self.cellsize).floor();
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (cx, cy) = (fx as usize, fy as usize);
        if cx >= self.ncols || cy >= self.nrows {
            return None;
        }
        Some((self.nrows - 1 - cy, cx))
    }

    pub fn is_aligned_with(&self, other: &RasterGrid) -> bool {
        self.ncols == other.ncols
            && self.nrows == other.nrows
            && (self.xll - other.xll).abs() <= 1e-9 * self.cellsize
            && (self.yll - other.yll).abs() <= 1e-9 * self.cellsize
            && (self.cellsize - other.cellsize).abs() <= 1e-12 * self.cellsize
    }

    /// Valid cells as `(long, lat, value)` points.
    pub fn valid_points(&self) -> Vec<(f64, f64, f64)> {
        let mut pts = Vec::with_capacity(self.n_valid());
        for r in 0..self.nrows {
            for c in 0..self.ncols {
                if let Some(v) = self.get(r, c) {
                    let (lat, lon) = self.cell_center(r, c);
                    pts.push((lon, lat, v));
                }
            }
        }
        pts
    }

    pub fn read_ascii<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path)?;
        let band = parse_band_file_name(path)
            .map(|(b, _)| b)
            .unwrap_or_else(|| {
                path.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            });
        Self::from_ascii_reader(f, &band)
    }

    pub fn from_ascii_reader<R: Read>(reader: R, band: &str) -> Result<Self> {
        let reader = BufReader::new(reader);
        let mut header: Vec<(String, f64)> = Vec::new();
        let mut data: Vec<f64> = Vec::new();
        let mut corner_is_center = (false, false);
        for line in reader.lines() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let first = trimmed.split_whitespace().next().unwrap_or("");
            if data.is_empty() && first.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                let mut parts = trimmed.split_whitespace();
                let key = parts.next().unwrap_or("").to_ascii_lowercase();
                let val: f64 = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Format(format!("bad header line {trimmed:?}")))?;
                match key.as_str() {
                    "xllcenter" => corner_is_center.0 = true,
                    "yllcenter" => corner_is_center.1 = true,
                    _ => {}
                }
                header.push((key, val));
                continue;
            }
            for tok in trimmed.split_whitespace() {
                data.push(
                    tok.parse()
                        .map_err(|_| Error::Format(format!("bad raster value {tok:?}")))?,
                );
            }
        }
        let get = |keys: &[&str]| {
            header
                .iter()
                .find(|(k, _)| keys.contains(&k.as_str()))
                .map(|(_, v)| *v)
        };
        let req = |keys: &[&str]| {
            get(keys).ok_or_else(|| Error::Format(format!("missing header key {}", keys[0])))
        };
        let ncols = req(&["ncols"])? as usize;
        let nrows = req(&["nrows"])? as usize;
        let cellsize = req(&["cellsize"])?;
        let mut xll = req(&["xllcorner", "xllcenter"])?;
        let mut yll = req(&["yllcorner", "yllcenter"])?;
        if corner_is_center.0 {
            xll -= 0.5 * cellsize;
        }
        if corner_is_center.1 {
            yll -= 0.5 * cellsize;
        }
        let nodata = get(&["nodata_value"]).unwrap_or(DEFAULT_NODATA);
        if data.len() != ncols * nrows {
            return Err(Error::dim("ascii grid cells", ncols * nrows, data.len()));
        }
        let values = data
            .into_iter()
            .map(|v| if v == nodata || !v.is_finite() { None } else { Some(v) })
            .collect();
        let mut g = RasterGrid::from_values(band, ncols, nrows, xll, yll, cellsize, values)?;
        g.nodata = nodata;
        Ok(g)
    }

    pub fn write_ascii<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        write_atomic(path.as_ref(), |w| self.to_ascii_writer(w))
    }

    pub fn to_ascii_writer<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "ncols {}", self.ncols)?;
        writeln!(w, "nrows {}", self.nrows)?;
        writeln!(w, "xllcorner {}", self.xll)?;
        writeln!(w, "yllcorner {}", self.yll)?;
        writeln!(w, "cellsize {}", self.cellsize)?;
        writeln!(w, "NODATA_value {}", self.nodata)?;
        let mut line = String::new();
        for r in 0..self.nrows {
            line.clear();
            for c in 0..self.ncols {
                if c > 0 {
                    line.push(' ');
                }
                let v = self.get(r, c).unwrap_or(self.nodata);
                write!(line, "{v}").expect("write to string");
            }
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `<band>_<YYYY-MM-DD>.asc`
pub fn band_file_name(band: &str, date: NaiveDate) -> String {
    format!("{band}_{}.asc", date.format("%Y-%m-%d"))
}

pub fn band_path(dir: &Path, band: &str, date: NaiveDate) -> PathBuf {
    dir.join(band_file_name(band, date))
}

/// Splits `<band>_<YYYY-MM-DD>.asc` into band and date.
pub fn parse_band_file_name(path: &Path) -> Option<(String, NaiveDate)> {
    let name = path.file_name()?.to_str()?;
    let stem = name.strip_suffix(".asc")?;
    let (band, date) = stem.rsplit_once('_')?;
    let date = NaiveDate::parse_from_str(date, "%Y-%m-%d").ok()?;
    Some((band.to_string(), date))
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>,
{
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let f = std::fs::File::create(&tmp)?;
        let mut w = std::io::BufWriter::new(f);
        body(&mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
