//! Quadratic B-spline bases with zero derivative at both interval ends.
//!
//! Each constrained function is the sum of a uniform quadratic B-spline and
//! all of its mirror images under reflection about the interval ends. The
//! images of the centres `a + i d` are again lattice points, so the folded
//! functions keep the partition of unity, and every one of them is symmetric
//! about `a` and `b`, which forces `g'(a) = g'(b) = 0`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{Domain, RegularGrid};

/// Three-point Gauss-Legendre nodes and weights on `[-1, 1]`.
const GAUSS3: [(f64, f64); 3] =
    [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];

/// Uniform quadratic B-spline centred at 0 with unit knot spacing, and its
/// first two derivatives.
fn cardinal(t: f64, order: usize) -> f64 {
    let a = t.abs();
    if a >= 1.5 {
        return 0.0;
    }
    let s = t.signum();
    match (order, a <= 0.5) {
        (0, true) => 0.75 - t * t,
        (0, false) => 0.5 * (1.5 - a) * (1.5 - a),
        (1, true) => -2.0 * t,
        (1, false) => -s * (1.5 - a),
        (2, true) => -2.0,
        (2, false) => 1.0,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spline1D {
    a: f64,
    b: f64,
    k: usize,
    spacing: f64,
}

impl Spline1D {
    /// `k` constrained functions on `[a, b]`. `k = 1` is the constant function.
    pub fn new(a: f64, b: f64, k: usize) -> Result<Self> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Config(format!("invalid spline interval [{a}, {b}]")));
        }
        if k == 0 {
            return Err(Error::Config("spline basis needs at least one function".into()));
        }
        let spacing = if k == 1 { b - a } else { (b - a) / (k - 1) as f64 };
        Ok(Self { a, b, k, spacing })
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// Knots inside `[a, b]`, including both ends. Every basis function is a
    /// single polynomial between consecutive knots.
    pub fn breakpoints(&self) -> Vec<f64> {
        if self.k == 1 {
            return vec![self.a, self.b];
        }
        let mut out = vec![self.a];
        for j in 0..self.k - 1 {
            out.push(self.a + (j as f64 + 0.5) * self.spacing);
        }
        out.push(self.b);
        out
    }

    fn fold(&self, lattice: i64) -> usize {
        let period = 2 * (self.k as i64 - 1);
        let r = lattice.rem_euclid(period);
        if r < self.k as i64 {
            r as usize
        } else {
            (period - r) as usize
        }
    }

    /// Nonzero `(index, value)` pairs of the `order`-th derivative at `x`.
    /// At most three entries; indices are distinct.
    pub fn eval(&self, x: f64, order: usize) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(3);
        self.eval_into(x, order, &mut out);
        out
    }

    pub(crate) fn eval_into(&self, x: f64, order: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        if self.k == 1 {
            if order == 0 {
                out.push((0, 1.0));
            }
            return;
        }
        let d = self.spacing;
        let t = (x - self.a) / d;
        let centre = t.round() as i64;
        let scale = d.powi(order as i32);
        for lattice in centre - 1..=centre + 1 {
            let v = cardinal(t - lattice as f64, order) / scale;
            if v == 0.0 {
                continue;
            }
            let idx = self.fold(lattice);
            match out.iter_mut().find(|(i, _)| *i == idx) {
                Some(entry) => entry.1 += v,
                None => out.push((idx, v)),
            }
        }
    }

    /// Value of the `order`-th derivative of basis function `i` at `x`.
    pub fn value(&self, i: usize, x: f64, order: usize) -> f64 {
        self.eval(x, order).into_iter().find(|(j, _)| *j == i).map_or(0.0, |(_, v)| v)
    }

    /// `G[i][j] = integral over [a, b] of g_i^(order) g_j^(order)`, exact for
    /// the piecewise-quadratic basis.
    pub fn derivative_gram(&self, order: usize) -> Result<DMatrix<f64>> {
        if order > 2 {
            return Err(Error::Parameter(format!("derivative order must be 0, 1 or 2, got {order}")));
        }
        let k = self.k;
        let mut g = DMatrix::zeros(k, k);
        let knots = self.breakpoints();
        let mut vals = Vec::with_capacity(3);
        for w in knots.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for &(node, weight) in &GAUSS3 {
                let x = mid + half * node;
                self.eval_into(x, order, &mut vals);
                for &(i, vi) in &vals {
                    for &(j, vj) in &vals {
                        g[(i, j)] += weight * half * vi * vj;
                    }
                }
            }
        }
        Ok(g)
    }
}

/// Tensor-product basis `f_ij(x, y) = g_i(x) h_j(y)` with flat index `i * l + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBasis2D {
    bx: Spline1D,
    by: Spline1D,
}

impl TensorBasis2D {
    pub fn new(domain: &Domain, k: usize, l: usize) -> Result<Self> {
        Ok(Self {
            bx: Spline1D::new(domain.x_min, domain.x_max, k)?,
            by: Spline1D::new(domain.y_min, domain.y_max, l)?,
        })
    }

    /// The single constant function used by stationary models.
    pub fn constant(domain: &Domain) -> Result<Self> {
        Self::new(domain, 1, 1)
    }

    pub fn x(&self) -> &Spline1D {
        &self.bx
    }

    pub fn y(&self) -> &Spline1D {
        &self.by
    }

    pub fn k(&self) -> usize {
        self.bx.len()
    }

    pub fn l(&self) -> usize {
        self.by.len()
    }

    pub fn len(&self) -> usize {
        self.k() * self.l()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn domain(&self) -> Domain {
        let (x_min, x_max) = self.bx.interval();
        let (y_min, y_max) = self.by.interval();
        Domain { x_min, x_max, y_min, y_max }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.l() + j
    }

    /// Nonzero `(flat index, value)` pairs of all basis functions at a point.
    pub fn eval(&self, x: f64, y: f64) -> Vec<(usize, f64)> {
        let gx = self.bx.eval(x, 0);
        let hy = self.by.eval(y, 0);
        let mut out = Vec::with_capacity(gx.len() * hy.len());
        for &(i, gi) in &gx {
            for &(j, hj) in &hy {
                out.push((self.index(i, j), gi * hj));
            }
        }
        out.sort_by_key(|e| e.0);
        out
    }

    /// Coefficients of the constant function `c` (partition of unity).
    pub fn constant_coefficients(&self, c: f64) -> Vec<f64> {
        vec![c; self.len()]
    }

    /// Basis functions evaluated at every cell centre of `grid`.
    pub fn eval_basis_matrix(&self, grid: &RegularGrid) -> Result<BasisMatrix> {
        if !self.domain().approx_eq(grid.domain()) {
            return Err(Error::Config(format!(
                "basis domain {:?} does not match grid domain {:?}",
                self.domain(),
                grid.domain()
            )));
        }
        let mut indptr = Vec::with_capacity(grid.num_cells() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (x, y) in grid.centers() {
            for (idx, v) in self.eval(x, y) {
                indices.push(idx);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(BasisMatrix { nrows: grid.num_cells(), ncols: self.len(), indptr, indices, values })
    }
}

/// Row-compressed `cells x basis functions` evaluation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl BasisMatrix {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|(j, _)| *j == c).map_or(0.0, |(_, v)| v)
    }

    /// `F * alpha`.
    pub fn mul_vec(&self, alpha: &[f64]) -> Vec<f64> {
        assert_eq!(alpha.len(), self.ncols);
        (0..self.nrows).map(|r| self.row(r).map(|(c, v)| v * alpha[c]).sum()).collect()
    }

    /// `F^T * s`.
    pub fn tmul_vec(&self, s: &[f64]) -> Vec<f64> {
        assert_eq!(s.len(), self.nrows);
        let mut out = vec![0.0; self.ncols];
        for (r, &sr) in s.iter().enumerate() {
            if sr == 0.0 {
                continue;
            }
            for (c, v) in self.row(r) {
                out[c] += v * sr;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, panels: usize) -> f64 {
        let h = (hi - lo) / panels as f64;
        let mut s = f(lo) + f(hi);
        for p in 1..panels {
            let w = if p % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(lo + p as f64 * h);
        }
        s * h / 3.0
    }

    /// Adaptive Simpson quadrature used as an oracle independent of the
    /// Gauss rule in `derivative_gram`.
    fn adaptive<F: Fn(f64) -> f64 + Copy>(f: F, lo: f64, hi: f64, tol: f64, depth: usize) -> f64 {
        let whole = simpson(f, lo, hi, 2);
        let mid = 0.5 * (lo + hi);
        let left = simpson(f, lo, mid, 2);
        let right = simpson(f, mid, hi, 2);
        if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            adaptive(f, lo, mid, tol / 2.0, depth - 1) + adaptive(f, mid, hi, tol / 2.0, depth - 1)
        }
    }

    #[test]
    fn single_function_is_constant() {
        let s = Spline1D::new(0.0, 3.0, 1).unwrap();
        for x in [0.0, 0.7, 3.0] {
            assert_eq!(s.eval(x, 0), vec![(0, 1.0)]);
            assert!(s.eval(x, 1).is_empty());
        }
        let d = Domain::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let grid = RegularGrid::new(d, 5, 3).unwrap();
        let f = TensorBasis2D::constant(&d).unwrap().eval_basis_matrix(&grid).unwrap();
        assert_eq!(f.ncols(), 1);
        for r in 0..f.nrows() {
            assert_eq!(f.get(r, 0), 1.0);
        }
    }

    #[test]
    fn partition_of_unity_and_neumann_ends() {
        for k in 2..8 {
            let s = Spline1D::new(-1.0, 2.5, k).unwrap();
            for step in 0..=200 {
                let x = -1.0 + 3.5 * step as f64 / 200.0;
                let total: f64 = s.eval(x, 0).iter().map(|e| e.1).sum();
                assert!((total - 1.0).abs() < 1e-14, "k={k} x={x} sum={total}");
            }
            for i in 0..k {
                assert!(s.value(i, -1.0, 1).abs() < 1e-14);
                assert!(s.value(i, 2.5, 1).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn endpoint_derivative_by_finite_differences() {
        let s = Spline1D::new(0.0, 1.0, 4).unwrap();
        let eps = 1e-7;
        for i in 0..4 {
            let left = (s.value(i, eps, 0) - s.value(i, 0.0, 0)) / eps;
            let right = (s.value(i, 1.0, 0) - s.value(i, 1.0 - eps, 0)) / eps;
            assert!(left.abs() < 1e-5 && right.abs() < 1e-5, "i={i} {left} {right}");
        }
    }

    #[test]
    fn c1_continuity_at_knots() {
        let s = Spline1D::new(0.0, 1.0, 5).unwrap();
        for knot in s.breakpoints() {
            for i in 0..5 {
                for order in 0..2 {
                    let lo = s.value(i, (knot - 1e-9).max(0.0), order);
                    let hi = s.value(i, (knot + 1e-9).min(1.0), order);
                    assert!((lo - hi).abs() < 1e-6, "i={i} knot={knot} order={order}");
                }
            }
        }
    }

    #[test]
    fn gram_matches_adaptive_quadrature() {
        let s = Spline1D::new(0.0, 1.0, 3).unwrap();
        for order in 0..=2 {
            let g = s.derivative_gram(order).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    // Integrate piecewise so the oracle never straddles a kink.
                    let knots = s.breakpoints();
                    let oracle: f64 = knots
                        .windows(2)
                        .map(|w| {
                            let f = |x: f64| s.value(i, x, order) * s.value(j, x, order);
                            let pad = 1e-15;
                            adaptive(f, w[0] + pad, w[1] - pad, 1e-13, 30)
                        })
                        .sum();
                    assert!((g[(i, j)] - oracle).abs() < 1e-10, "order {order} ({i},{j}): {} vs {oracle}", g[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn gram_properties() {
        let s = Spline1D::new(0.0, 2.0, 6).unwrap();
        let g0 = s.derivative_gram(0).unwrap();
        let asym = (&g0 - g0.transpose()).amax();
        assert!(asym < 1e-14);
        assert!(g0.clone().cholesky().is_some());
        let g2 = s.derivative_gram(2).unwrap();
        let ones = nalgebra::DVector::from_element(6, 1.0);
        assert!((&g2 * &ones).amax() < 1e-12);
        let g1 = s.derivative_gram(1).unwrap();
        assert!((&g1 * &ones).amax() < 1e-12);
        assert!(s.derivative_gram(3).is_err());
    }

    #[test]
    fn basis_matrix_rows() {
        let d = Domain::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let basis = TensorBasis2D::new(&d, 4, 4).unwrap();
        let grid = RegularGrid::new(d, 8, 8).unwrap();
        let f = basis.eval_basis_matrix(&grid).unwrap();
        for r in 0..f.nrows() {
            assert!(f.row(r).count() <= 9);
            let total: f64 = f.row(r).map(|e| e.1).sum();
            assert!((total - 1.0).abs() < 1e-14);
        }
        let other = RegularGrid::from_bounds(0.0, 2.0, 0.0, 1.0, 8, 8).unwrap();
        assert!(matches!(basis.eval_basis_matrix(&other), Err(Error::Config(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn combinations_have_flat_ends(k in 2usize..10, w in proptest::collection::vec(-3.0f64..3.0, 10)) {
                let s = Spline1D::new(0.0, 5.0, k).unwrap();
                let f = |x: f64, order: usize| -> f64 {
                    s.eval(x, order).iter().map(|&(i, v)| w[i] * v).sum()
                };
                let interior = (0..50).map(|t| f(0.1 + 4.8 * t as f64 / 49.0, 1).abs()).fold(1.0f64, f64::max);
                prop_assert!(f(0.0, 1).abs() < 1e-8 * interior);
                prop_assert!(f(5.0, 1).abs() < 1e-8 * interior);
            }

            #[test]
            fn second_derivative_energy(k in 2usize..8, w in proptest::collection::vec(-2.0f64..2.0, 8)) {
                let s = Spline1D::new(0.0, 1.0, k).unwrap();
                let w = &w[..k];
                let g2 = s.derivative_gram(2).unwrap();
                let v = nalgebra::DVector::from_column_slice(w);
                let gram = (v.transpose() * &g2 * &v)[(0, 0)];
                // f is quadratic between knots, so a central second difference at each
                // interval midpoint is exact up to rounding.
                let val = |x: f64| -> f64 { s.eval(x, 0).iter().map(|&(i, c)| w[i] * c).sum() };
                let mut fd = 0.0;
                for seg in s.breakpoints().windows(2) {
                    let mid = 0.5 * (seg[0] + seg[1]);
                    let step = 1e-3 * (seg[1] - seg[0]);
                    let d2 = (val(mid + step) - 2.0 * val(mid) + val(mid - step)) / (step * step);
                    fd += d2 * d2 * (seg[1] - seg[0]);
                }
                let scale = gram.abs().max(1.0);
                prop_assert!((fd - gram).abs() < 1e-6 * scale, "fd {} gram {}", fd, gram);
            }
        }
    }
}
