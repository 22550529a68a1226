//! Summaries of the covariance structure: marginal standard deviations and
//! correlation contours, either from local stationary parameters or from the
//! GMRF itself.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grid::RegularGrid;
use crate::matern::LocalMatern;
use crate::sparse::{CholFactor, Ordering};
use crate::spde::{CoefficientFields, SpdeOperator};

/// Per-cell marginal standard deviation of a stationary field with the
/// cell's local parameters.
pub fn approximate_sd(fields: &CoefficientFields) -> Vec<f64> {
    (0..fields.len()).map(|c| local(fields, c).marginal_variance().sqrt()).collect()
}

fn local(fields: &CoefficientFields, c: usize) -> LocalMatern {
    LocalMatern::new(fields.kappa2[c], fields.gamma[c], fields.vx[c], fields.vy[c])
}

/// Level-`rho` ellipse of the local stationary correlation at a point.
pub fn approximate_ellipse(
    grid: &RegularGrid,
    fields: &CoefficientFields,
    at: (f64, f64),
    rho: f64,
    points: usize,
) -> Result<Vec<(f64, f64)>> {
    let c = grid.locate_flat(at.0, at.1)?;
    local(fields, c).ellipse(at.0, at.1, rho, points)
}

/// Exact marginal variances and correlations of the discretized field.
#[derive(Debug)]
pub struct ExactCovariance {
    factor: CholFactor,
    variance: Vec<f64>,
}

impl ExactCovariance {
    pub fn new(op: &SpdeOperator) -> Result<Self> {
        let factor = CholFactor::factorize(op.q(), &Ordering::Amd)?;
        let variance = factor.selected_inverse().diag();
        Ok(Self { factor, variance })
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn sd(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.sqrt()).collect()
    }

    /// Correlation of every cell with cell `c`, from one solve `Q x = e_c`.
    pub fn correlation_with(&self, c: usize) -> Result<Vec<f64>> {
        let n = self.variance.len();
        if c >= n {
            return Err(Error::IndexOutOfRange { index: c, len: n });
        }
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        let col = self.factor.solve(&e)?;
        let sc = self.variance[c].sqrt();
        Ok(col.iter().zip(&self.variance).map(|(v, d)| v / (sc * d.sqrt())).collect())
    }
}

/// Level-`rho` contour lines of a cell-centred field, by marching squares
/// on the lattice of cell centres. Closed lines repeat their first point.
pub fn contour(grid: &RegularGrid, values: &[f64], rho: f64) -> Result<Vec<Vec<(f64, f64)>>> {
    let (m, n) = (grid.m(), grid.n());
    if values.len() != m * n {
        return Err(Error::Dimension(format!("{} values for {} cells", values.len(), m * n)));
    }
    let centre = |i: usize, j: usize| grid.center_unchecked(crate::grid::CellIndex::new(i, j));
    let v = |i: usize, j: usize| values[j * m + i];
    // Crossing on the lattice edge from node (i, j) towards +x (kind 0) or +y (kind 1).
    let crossing = |kind: u8, i: usize, j: usize| -> (f64, f64) {
        let (i2, j2) = if kind == 0 { (i + 1, j) } else { (i, j + 1) };
        let (a, b) = (v(i, j), v(i2, j2));
        let t = if a == b { 0.5 } else { (rho - a) / (b - a) };
        let (p, q) = (centre(i, j), centre(i2, j2));
        (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
    };

    type Key = (u8, usize, usize);
    let mut segments: Vec<(Key, Key)> = Vec::new();
    for j in 0..n.saturating_sub(1) {
        for i in 0..m.saturating_sub(1) {
            let above = |a: f64| (a >= rho) as u8;
            let case = above(v(i, j)) | above(v(i + 1, j)) << 1 | above(v(i + 1, j + 1)) << 2 | above(v(i, j + 1)) << 3;
            let bottom = (0u8, i, j);
            let right = (1u8, i + 1, j);
            let top = (0u8, i, j + 1);
            let left = (1u8, i, j);
            let mean = 0.25 * (v(i, j) + v(i + 1, j) + v(i + 1, j + 1) + v(i, j + 1));
            match case {
                0 | 15 => {}
                1 | 14 => segments.push((left, bottom)),
                2 | 13 => segments.push((bottom, right)),
                3 | 12 => segments.push((left, right)),
                4 | 11 => segments.push((right, top)),
                6 | 9 => segments.push((bottom, top)),
                7 | 8 => segments.push((left, top)),
                5 => {
                    if mean >= rho {
                        segments.push((left, top));
                        segments.push((bottom, right));
                    } else {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    }
                }
                10 => {
                    if mean >= rho {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    } else {
                        segments.push((left, top));
                        segments.push((bottom, right));
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    let mut at: HashMap<Key, Vec<usize>> = HashMap::new();
    for (s, (a, b)) in segments.iter().enumerate() {
        at.entry(*a).or_default().push(s);
        at.entry(*b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let next = |key: Key, from: usize, used: &[bool]| -> Option<usize> {
        at.get(&key)?.iter().copied().find(|&s| s != from && !used[s])
    };
    let mut lines = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let mut keys = std::collections::VecDeque::from([a, b]);
        for forward in [true, false] {
            let mut cur = start;
            loop {
                let end = if forward { *keys.back().unwrap() } else { *keys.front().unwrap() };
                let Some(s) = next(end, cur, &used) else { break };
                used[s] = true;
                let (p, q) = segments[s];
                let other = if p == end { q } else { p };
                if forward {
                    keys.push_back(other);
                } else {
                    keys.push_front(other);
                }
                cur = s;
            }
        }
        lines.push(keys.iter().map(|&(k, i, j)| crossing(k, i, j)).collect());
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;

    #[test]
    fn contour_of_a_cone_is_a_closed_circle() {
        let grid = RegularGrid::new(Domain::new(-1.0, 1.0, -1.0, 1.0).unwrap(), 41, 41).unwrap();
        let values: Vec<f64> = grid.centers().iter().map(|&(x, y)| 1.0 - (x * x + y * y).sqrt()).collect();
        let lines = contour(&grid, &values, 0.5).unwrap();
        assert_eq!(lines.len(), 1);
        let line = &lines[0];
        assert_eq!(line.first(), line.last());
        for &(x, y) in line {
            assert!(((x * x + y * y).sqrt() - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn exact_correlation_is_one_at_source() {
        let grid = RegularGrid::new(Domain::new(0.0, 4.0, 0.0, 4.0).unwrap(), 20, 20).unwrap();
        let fields = CoefficientFields::constant(400, 1.0, 1.0, 0.5, 0.0);
        let op = SpdeOperator::assemble(&grid, &fields).unwrap();
        let ex = ExactCovariance::new(&op).unwrap();
        let corr = ex.correlation_with(210).unwrap();
        assert!((corr[210] - 1.0).abs() < 1e-12);
        assert!(corr.iter().all(|&c| c <= 1.0 + 1e-12));
        // Longer correlation along v = (0.5, 0).
        assert!(corr[212] > corr[250]);
        let approx = approximate_sd(&fields);
        assert!((approx[0] - LocalMatern::new(1.0, 1.0, 0.5, 0.0).marginal_variance().sqrt()).abs() < 1e-15);
    }
}
