//! ESRI ASCII grids with bilinear interpolation between sample points.
//!
//! Samples sit at cell centres for `xllcorner`/`yllcorner` headers and at
//! the given coordinates for `xllcenter`/`yllcenter`. The first data row is
//! the northernmost.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{CellIndex, RegularGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    ncols: usize,
    nrows: usize,
    /// Coordinates of the south-west sample.
    x0: f64,
    y0: f64,
    dx: f64,
    dy: f64,
    nodata: Option<f64>,
    /// Row-major, first row north.
    values: Vec<f64>,
}

impl Raster {
    pub fn new(
        ncols: usize,
        nrows: usize,
        x0: f64,
        y0: f64,
        dx: f64,
        dy: f64,
        nodata: Option<f64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if ncols == 0 || nrows == 0 || values.len() != ncols * nrows {
            return Err(Error::Dimension(format!("{} values for a {ncols}x{nrows} raster", values.len())));
        }
        if !(dx > 0.0) || !(dy > 0.0) {
            return Err(Error::Config(format!("cell sizes must be positive, got {dx} x {dy}")));
        }
        Ok(Self { ncols, nrows, x0, y0, dx, dy, nodata, values })
    }

    /// Cell-centre values of `grid`, one sample per cell.
    pub fn from_grid(grid: &RegularGrid, values: &[f64], nodata: Option<f64>) -> Result<Self> {
        let (m, n) = (grid.m(), grid.n());
        if values.len() != m * n {
            return Err(Error::Dimension(format!("{} values for {} cells", values.len(), m * n)));
        }
        let mut rows = Vec::with_capacity(m * n);
        for j in (0..n).rev() {
            rows.extend_from_slice(&values[j * m..(j + 1) * m]);
        }
        let (x0, y0) = grid.center_unchecked(CellIndex::new(0, 0));
        Self::new(m, n, x0, y0, grid.hx(), grid.hy(), nodata, rows)
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at column `c`, row `r` counted from the south.
    fn sample(&self, c: usize, r: usize) -> f64 {
        self.values[(self.nrows - 1 - r) * self.ncols + c]
    }

    fn is_nodata(&self, v: f64) -> bool {
        !v.is_finite() || self.nodata.is_some_and(|nd| v == nd)
    }

    /// Bilinear blend of the four samples around `(x, y)`.
    pub fn bilinear(&self, x: f64, y: f64) -> Result<f64> {
        let err = |reason: &str| Error::Interpolation { x, y, reason: reason.to_string() };
        let fx = (x - self.x0) / self.dx;
        let fy = (y - self.y0) / self.dy;
        let (cmax, rmax) = ((self.ncols - 1) as f64, (self.nrows - 1) as f64);
        if !(fx >= 0.0 && fx <= cmax && fy >= 0.0 && fy <= rmax) {
            return Err(err("outside the raster extent"));
        }
        let c0 = (fx.floor() as usize).min(self.ncols.saturating_sub(2));
        let r0 = (fy.floor() as usize).min(self.nrows.saturating_sub(2));
        let c1 = (c0 + 1).min(self.ncols - 1);
        let r1 = (r0 + 1).min(self.nrows - 1);
        let (tx, ty) = (fx - c0 as f64, fy - r0 as f64);
        let v = [self.sample(c0, r0), self.sample(c1, r0), self.sample(c0, r1), self.sample(c1, r1)];
        let w = [(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty];
        let mut out = 0.0;
        for (vi, wi) in v.iter().zip(w) {
            if wi == 0.0 {
                continue;
            }
            if self.is_nodata(*vi) {
                return Err(err("neighbouring sample is nodata"));
            }
            out += wi * vi;
        }
        Ok(out)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::parse(std::io::BufReader::new(file))
    }

    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut header: Vec<(String, f64)> = Vec::new();
        let mut values = Vec::new();
        let mut in_data = false;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let first = trimmed.split_whitespace().next().unwrap_or("");
            if !in_data && first.chars().next().is_some_and(|ch| ch.is_ascii_alphabetic()) {
                let mut parts = trimmed.split_whitespace();
                let key = parts.next().unwrap().to_ascii_lowercase();
                let val = parts
                    .next()
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse { line: lineno, message: format!("bad header line `{trimmed}`") })?;
                header.push((key, val));
                continue;
            }
            in_data = true;
            for tok in trimmed.split_whitespace() {
                let v = tok
                    .parse::<f64>()
                    .map_err(|_| Error::Parse { line: lineno, message: format!("bad value `{tok}`") })?;
                values.push(v);
            }
        }
        let get = |k: &str| header.iter().find(|(key, _)| key == k).map(|(_, v)| *v);
        let need = |k: &str| get(k).ok_or_else(|| Error::Parse { line: 0, message: format!("missing header `{k}`") });
        let ncols = need("ncols")? as usize;
        let nrows = need("nrows")? as usize;
        let (dx, dy) = match (get("cellsize"), get("dx"), get("dy")) {
            (Some(c), _, _) => (c, c),
            (None, Some(dx), Some(dy)) => (dx, dy),
            _ => return Err(Error::Parse { line: 0, message: "missing `cellsize` (or `dx` and `dy`)".into() }),
        };
        let x0 = match (get("xllcorner"), get("xllcenter")) {
            (Some(v), _) => v + 0.5 * dx,
            (None, Some(v)) => v,
            _ => return Err(Error::Parse { line: 0, message: "missing `xllcorner` or `xllcenter`".into() }),
        };
        let y0 = match (get("yllcorner"), get("yllcenter")) {
            (Some(v), _) => v + 0.5 * dy,
            (None, Some(v)) => v,
            _ => return Err(Error::Parse { line: 0, message: "missing `yllcorner` or `yllcenter`".into() }),
        };
        Self::new(ncols, nrows, x0, y0, dx, dy, get("nodata_value"), values)
    }

    /// ESRI ASCII text with corner registration.
    pub fn to_ascii(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ncols {}", self.ncols);
        let _ = writeln!(s, "nrows {}", self.nrows);
        let _ = writeln!(s, "xllcorner {}", self.x0 - 0.5 * self.dx);
        let _ = writeln!(s, "yllcorner {}", self.y0 - 0.5 * self.dy);
        if self.dx == self.dy {
            let _ = writeln!(s, "cellsize {}", self.dx);
        } else {
            let _ = writeln!(s, "dx {}", self.dx);
            let _ = writeln!(s, "dy {}", self.dy);
        }
        if let Some(nd) = self.nodata {
            let _ = writeln!(s, "NODATA_value {nd}");
        }
        for row in self.values.chunks(self.ncols) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_ascii().as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;

    fn unit_square() -> Raster {
        let text = "ncols 2\nnrows 2\nxllcenter 0\nyllcenter 0\ncellsize 1\n1 1\n0 0\n";
        Raster::parse(text.as_bytes()).unwrap()
    }

    #[test]
    fn bilinear_examples() {
        let r = unit_square();
        assert_eq!(r.bilinear(0.5, 0.5).unwrap(), 0.5);
        assert_eq!(r.bilinear(0.25, 0.75).unwrap(), 0.75);
        let c = Raster::new(2, 2, 0.0, 0.0, 1.0, 1.0, None, vec![3.0; 4]).unwrap();
        assert_eq!(c.bilinear(0.3, 0.9).unwrap(), 3.0);
        assert!(matches!(r.bilinear(1.5, 0.5), Err(Error::Interpolation { .. })));
    }

    #[test]
    fn affine_fields_are_reproduced() {
        let (nc, nr) = (7, 5);
        let f = |x: f64, y: f64| 1.5 - 0.3 * x + 2.0 * y;
        let mut vals = Vec::new();
        for r in (0..nr).rev() {
            for c in 0..nc {
                vals.push(f(10.0 + 0.5 * c as f64, -3.0 + 0.25 * r as f64));
            }
        }
        let ras = Raster::new(nc, nr, 10.0, -3.0, 0.5, 0.25, None, vals).unwrap();
        for k in 0..50 {
            let x = 10.0 + 3.0 * (k as f64 * 0.37).fract();
            let y = -3.0 + 1.0 * (k as f64 * 0.61).fract();
            assert!((ras.bilinear(x, y).unwrap() - f(x, y)).abs() < 1e-12);
        }
        assert!((ras.bilinear(13.0, -2.0).unwrap() - f(13.0, -2.0)).abs() < 1e-12);
    }

    #[test]
    fn nodata_neighbour_fails() {
        let text = "ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 2 -9999\n1 2 3\n";
        let r = Raster::parse(text.as_bytes()).unwrap();
        assert_eq!(r.bilinear(1.0, 1.0).unwrap(), 1.5);
        assert!(r.bilinear(2.0, 1.0).is_err());
    }

    #[test]
    fn text_roundtrip_and_grid() {
        let grid = RegularGrid::new(Domain::new(0.0, 3.0, 0.0, 1.0).unwrap(), 3, 2).unwrap();
        let vals = [0.1, 0.2, 0.3, 1.0 / 3.0, 5.0, -6.0];
        let r = Raster::from_grid(&grid, &vals, Some(-9999.0)).unwrap();
        let back = Raster::parse(r.to_ascii().as_bytes()).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.bilinear(0.5, 0.25).unwrap(), 0.1);
        assert_eq!(r.bilinear(0.5, 0.75).unwrap(), 1.0 / 3.0);
        assert!(Raster::parse("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n".as_bytes()).is_err());
        assert!(matches!(
            Raster::parse("ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nabc\n".as_bytes()),
            Err(Error::Parse { line: 6, .. })
        ));
    }
}
