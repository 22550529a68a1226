//! Regular rectangular grids over a planar domain.
//!
//! Cells are indexed by `(i, j)` with `i` running along x and `j` along y.
//! Flat indices are column-stacked: cell `(i, j)` lives at `j * m + i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle `[x_min, x_max] x [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Domain {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let finite = [x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite());
        if !finite || x_max <= x_min || y_max <= y_min {
            return Err(Error::Config(format!("degenerate domain [{x_min}, {x_max}] x [{y_min}, {y_max}]")));
        }
        Ok(Self { x_min, x_max, y_min, y_max })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    /// Equality up to a relative tolerance of the domain size.
    pub fn approx_eq(&self, other: &Domain) -> bool {
        let scale = self.width().abs().max(self.height().abs()).max(1.0);
        let tol = 1e-12 * scale;
        (self.x_min - other.x_min).abs() <= tol
            && (self.x_max - other.x_max).abs() <= tol
            && (self.y_min - other.y_min).abs() <= tol
            && (self.y_max - other.y_max).abs() <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub i: usize,
    pub j: usize,
}

impl CellIndex {
    pub fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }
}

/// An `m x n` grid of equally sized rectangular cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct RegularGrid {
    domain: Domain,
    m: usize,
    n: usize,
    hx: f64,
    hy: f64,
}

#[derive(Serialize, Deserialize)]
struct GridSpec {
    domain: Domain,
    m: usize,
    n: usize,
}

impl TryFrom<GridSpec> for RegularGrid {
    type Error = Error;
    fn try_from(spec: GridSpec) -> Result<Self> {
        let d = spec.domain;
        RegularGrid::new(Domain::new(d.x_min, d.x_max, d.y_min, d.y_max)?, spec.m, spec.n)
    }
}

impl From<RegularGrid> for GridSpec {
    fn from(g: RegularGrid) -> Self {
        GridSpec { domain: g.domain, m: g.m, n: g.n }
    }
}

impl RegularGrid {
    /// Builds a grid with `m` cells along x and `n` along y.
    ///
    /// A single cell per axis is accepted; it is the degenerate grid used by
    /// closed-form checks.
    pub fn new(domain: Domain, m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::Config(format!("grid must have at least one cell per axis, got {m}x{n}")));
        }
        let hx = domain.width() / m as f64;
        let hy = domain.height() / n as f64;
        Ok(Self { domain, m, n, hx, hy })
    }

    pub fn from_bounds(x_min: f64, x_max: f64, y_min: f64, y_max: f64, m: usize, n: usize) -> Result<Self> {
        Self::new(Domain::new(x_min, x_max, y_min, y_max)?, m, n)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    /// Area of a single cell.
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn num_cells(&self) -> usize {
        self.m * self.n
    }

    pub fn flatten(&self, c: CellIndex) -> usize {
        c.j * self.m + c.i
    }

    pub fn unflatten(&self, idx: usize) -> CellIndex {
        CellIndex { i: idx % self.m, j: idx / self.m }
    }

    pub fn check(&self, c: CellIndex) -> Result<()> {
        if c.i >= self.m || c.j >= self.n {
            return Err(Error::CellOutOfRange { i: c.i, j: c.j, m: self.m, n: self.n });
        }
        Ok(())
    }

    /// Cell containing `(x, y)`. Cells are half-open on their upper edges,
    /// except that points on the upper domain boundary belong to the last cell.
    pub fn locate(&self, x: f64, y: f64) -> Result<CellIndex> {
        let d = &self.domain;
        let i = axis_cell('x', x, d.x_min, d.x_max, self.hx, self.m)?;
        let j = axis_cell('y', y, d.y_min, d.y_max, self.hy, self.n)?;
        Ok(CellIndex { i, j })
    }

    pub fn locate_flat(&self, x: f64, y: f64) -> Result<usize> {
        self.locate(x, y).map(|c| self.flatten(c))
    }

    pub fn cell_center(&self, c: CellIndex) -> Result<(f64, f64)> {
        self.check(c)?;
        Ok(self.center_unchecked(c))
    }

    pub(crate) fn center_unchecked(&self, c: CellIndex) -> (f64, f64) {
        (self.domain.x_min + (c.i as f64 + 0.5) * self.hx, self.domain.y_min + (c.j as f64 + 0.5) * self.hy)
    }

    /// Centers of all cells in flat-index order.
    pub fn centers(&self) -> Vec<(f64, f64)> {
        (0..self.num_cells()).map(|k| self.center_unchecked(self.unflatten(k))).collect()
    }
}

fn axis_cell(axis: char, v: f64, lo: f64, hi: f64, h: f64, count: usize) -> Result<usize> {
    if !(lo..=hi).contains(&v) {
        return Err(Error::OutsideDomain { axis, value: v, lo, hi });
    }
    let k = ((v - lo) / h).floor();
    Ok((k.max(0.0) as usize).min(count - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(m: usize, n: usize) -> RegularGrid {
        RegularGrid::from_bounds(0.0, 1.0, 0.0, 1.0, m, n).unwrap()
    }

    #[test]
    fn locate_examples() {
        let g = unit(2, 2);
        assert_eq!(g.locate(0.1, 0.1).unwrap(), CellIndex::new(0, 0));
        assert_eq!(g.locate(1.0, 1.0).unwrap(), CellIndex::new(1, 1));
        let g = RegularGrid::from_bounds(0.0, 4.0, 0.0, 2.0, 4, 2).unwrap();
        assert_eq!(g.locate(2.5, 1.5).unwrap(), CellIndex::new(2, 1));
    }

    #[test]
    fn locate_outside_names_axis() {
        let g = unit(2, 2);
        match g.locate(0.5, 1.5) {
            Err(Error::OutsideDomain { axis, value, .. }) => {
                assert_eq!(axis, 'y');
                assert_eq!(value, 1.5);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(g.locate(-0.1, 0.5), Err(Error::OutsideDomain { axis: 'x', .. })));
    }

    #[test]
    fn centers() {
        assert_eq!(unit(1, 1).cell_center(CellIndex::new(0, 0)).unwrap(), (0.5, 0.5));
        let g = RegularGrid::from_bounds(0.0, 4.0, 0.0, 2.0, 4, 2).unwrap();
        assert_eq!(g.cell_center(CellIndex::new(3, 1)).unwrap(), (3.5, 1.5));
        assert!(matches!(g.cell_center(CellIndex::new(4, 0)), Err(Error::CellOutOfRange { .. })));

        let g = RegularGrid::from_bounds(-130.15, -60.85, 21.65, 51.35, 400, 200).unwrap();
        let (x, y) = g.cell_center(CellIndex::new(0, 0)).unwrap();
        assert!((x - (-130.15 + 69.3 / 800.0)).abs() < 1e-12);
        assert!((y - (21.65 + 29.7 / 400.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(RegularGrid::from_bounds(1.0, 0.0, 0.0, 1.0, 2, 2).is_err());
        assert!(RegularGrid::from_bounds(0.0, 1.0, 0.0, 1.0, 0, 2).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let g = RegularGrid::from_bounds(-2.0, 3.0, 1.0, 2.5, 7, 3).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        let back: RegularGrid = serde_json::from_str(&s).unwrap();
        assert_eq!(g, back);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn center_locates_to_itself(
                x0 in -100.0f64..100.0, w in 0.1f64..50.0,
                y0 in -100.0f64..100.0, h in 0.1f64..50.0,
                m in 1usize..40, n in 1usize..40,
            ) {
                let g = RegularGrid::from_bounds(x0, x0 + w, y0, y0 + h, m, n).unwrap();
                for k in 0..g.num_cells() {
                    let c = g.unflatten(k);
                    prop_assert_eq!(g.flatten(c), k);
                    let (cx, cy) = g.cell_center(c).unwrap();
                    prop_assert_eq!(g.locate(cx, cy).unwrap(), c);
                }
                let total = g.cell_area() * g.num_cells() as f64;
                prop_assert!((total - w * h).abs() <= 1e-12 * w * h);
            }
        }
    }
}
