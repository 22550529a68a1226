//! Finite-volume discretization of `κ²(s) − ∇·H(s)∇` on a regular grid with
//! zero-flux boundaries, and the GMRF precision `Q = AᵀA·V`.
//!
//! `A` is stored as a 9-point stencil per row. Entry `s` of a row refers to
//! the cell at offset `(s % 3 − 1, s / 3 − 1)` in `(i, j)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RegularGrid;
use crate::sparse::SymSparse;
use crate::spline::BasisMatrix;

const NONE: usize = usize::MAX;

/// The four spatially varying coefficient functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldId {
    Kappa2,
    Gamma,
    Vx,
    Vy,
}

impl FieldId {
    pub const ALL: [FieldId; 4] = [FieldId::Kappa2, FieldId::Gamma, FieldId::Vx, FieldId::Vy];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FieldId::Kappa2 => "kappa2",
            FieldId::Gamma => "gamma",
            FieldId::Vx => "vx",
            FieldId::Vy => "vy",
        }
    }

    /// κ² and γ are exponentials of their spline expansions.
    pub fn is_log_scale(self) -> bool {
        matches!(self, FieldId::Kappa2 | FieldId::Gamma)
    }
}

/// Per-cell values of κ², γ and v = (vx, vy). `H = γI + vvᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFields {
    pub kappa2: Vec<f64>,
    pub gamma: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
}

impl CoefficientFields {
    /// Evaluates the spline expansions at the cell centres.
    pub fn materialize(basis: &BasisMatrix, alpha: [&[f64]; 4]) -> Result<Self> {
        for (f, a) in FieldId::ALL.iter().zip(alpha) {
            if a.len() != basis.ncols() {
                return Err(Error::Dimension(format!(
                    "{} weights have length {}, basis has {}",
                    f.name(),
                    a.len(),
                    basis.ncols()
                )));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parameter(format!("non-finite {} weight", f.name())));
            }
        }
        let fields = Self {
            kappa2: basis.mul_vec(alpha[0]).into_iter().map(f64::exp).collect(),
            gamma: basis.mul_vec(alpha[1]).into_iter().map(f64::exp).collect(),
            vx: basis.mul_vec(alpha[2]),
            vy: basis.mul_vec(alpha[3]),
        };
        if fields.kappa2.iter().chain(&fields.gamma).any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Parameter("weights overflow the exponential transform".into()));
        }
        Ok(fields)
    }

    pub fn constant(cells: usize, kappa2: f64, gamma: f64, vx: f64, vy: f64) -> Self {
        Self { kappa2: vec![kappa2; cells], gamma: vec![gamma; cells], vx: vec![vx; cells], vy: vec![vy; cells] }
    }

    pub fn len(&self) -> usize {
        self.kappa2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa2.is_empty()
    }

    /// `(H11, H12, H22)` at cell `c`.
    pub fn h(&self, c: usize) -> [f64; 3] {
        let (g, x, y) = (self.gamma[c], self.vx[c], self.vy[c]);
        [g + x * x, x * y, g + y * y]
    }

    fn check(&self) -> Result<()> {
        let n = self.len();
        if self.gamma.len() != n || self.vx.len() != n || self.vy.len() != n {
            return Err(Error::Dimension("coefficient fields differ in length".into()));
        }
        if let Some(c) = self.kappa2.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Parameter(format!("kappa2 must be positive, got {} at cell {c}", self.kappa2[c])));
        }
        if let Some(c) = self.gamma.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Parameter(format!("gamma must be positive, got {} at cell {c}", self.gamma[c])));
        }
        if self.vx.iter().chain(&self.vy).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite anisotropy vector".into()));
        }
        Ok(())
    }

    /// Gradient with respect to the four weight vectors, given the
    /// sensitivities of a scalar to the per-cell κ² and H entries.
    pub fn pullback(&self, basis: &BasisMatrix, sens: &CellSensitivities) -> [Vec<f64>; 4] {
        let n = self.len();
        let mut d = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for c in 0..n {
            let (g11, g12, g22) = (sens.h11[c], sens.h12[c], sens.h22[c]);
            d[0][c] = self.kappa2[c] * sens.kappa2[c];
            d[1][c] = self.gamma[c] * (g11 + g22);
            d[2][c] = 2.0 * self.vx[c] * g11 + self.vy[c] * g12;
            d[3][c] = self.vx[c] * g12 + 2.0 * self.vy[c] * g22;
        }
        d.map(|v| basis.tmul_vec(&v))
    }

    /// Per-cell derivative of `(κ², H11, H12, H22)` with respect to one
    /// weight of `field`, where `f` holds that basis function at the cells.
    fn derivative(&self, field: FieldId, f: &[f64]) -> [Vec<f64>; 4] {
        let n = self.len();
        let z = vec![0.0; n];
        let scaled = |w: &[f64], s: f64| -> Vec<f64> { w.iter().zip(f).map(|(a, b)| s * a * b).collect() };
        match field {
            FieldId::Kappa2 => [scaled(&self.kappa2, 1.0), z.clone(), z.clone(), z],
            FieldId::Gamma => {
                let g = scaled(&self.gamma, 1.0);
                [z.clone(), g.clone(), z, g]
            }
            FieldId::Vx => [z.clone(), scaled(&self.vx, 2.0), scaled(&self.vy, 1.0), z],
            FieldId::Vy => [z.clone(), z, scaled(&self.vx, 1.0), scaled(&self.vy, 2.0)],
        }
    }
}

/// Sensitivities of a scalar to per-cell κ², H11, H12 and H22.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSensitivities {
    pub kappa2: Vec<f64>,
    pub h11: Vec<f64>,
    pub h12: Vec<f64>,
    pub h22: Vec<f64>,
}

/// Square matrix on the cells of an `m × n` grid with a 9-point stencil.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilMatrix {
    m: usize,
    n: usize,
    rows: Vec<[f64; 9]>,
}

#[inline]
fn slot(di: isize, dj: isize) -> usize {
    ((dj + 1) * 3 + (di + 1)) as usize
}

impl StencilMatrix {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self { m, n, rows: vec![[0.0; 9]; m * n] }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, k: usize) -> &[f64; 9] {
        &self.rows[k]
    }

    pub(crate) fn row_mut(&mut self, k: usize) -> &mut [f64; 9] {
        &mut self.rows[k]
    }

    /// Column index for stencil slot `s` of row `k`, if inside the grid.
    pub fn column(&self, k: usize, s: usize) -> Option<usize> {
        let (i, j) = ((k % self.m) as isize, (k / self.m) as isize);
        let (ci, cj) = (i + (s % 3) as isize - 1, j + (s / 3) as isize - 1);
        if ci < 0 || cj < 0 || ci >= self.m as isize || cj >= self.n as isize {
            None
        } else {
            Some(cj as usize * self.m + ci as usize)
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (ri, rj) = ((r % self.m) as isize, (r / self.m) as isize);
        let (ci, cj) = ((c % self.m) as isize, (c / self.m) as isize);
        let (di, dj) = (ci - ri, cj - rj);
        if di.abs() > 1 || dj.abs() > 1 {
            0.0
        } else {
            self.rows[r][slot(di, dj)]
        }
    }

    /// Calls `f(row, col, value)` for every in-grid stencil entry.
    pub fn for_each(&self, mut f: impl FnMut(usize, usize, f64)) {
        for k in 0..self.dim() {
            for s in 0..9 {
                if let Some(c) = self.column(k, s) {
                    f(k, c, self.rows[k][s]);
                }
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.for_each(|r, c, v| y[r] += v * x[c]);
        y
    }

    pub fn tmul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.for_each(|r, c, v| y[c] += v * x[r]);
        y
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.dim(), self.dim());
        self.for_each(|r, c, v| d[(r, c)] += v);
        d
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        self.for_each(|_, _, v| m = m.max(v.abs()));
        m
    }
}

/// Flux across one cell edge as a linear function of `u`, split into the
/// part multiplying the normal H entry and the part multiplying H12.
struct Edge {
    lo: usize,
    hi: usize,
    x_normal: bool,
    normal: [(usize, f64); 2],
    tangential: [(usize, f64); 8],
    n_tangential: usize,
}

impl Edge {
    fn tangential(&self) -> &[(usize, f64)] {
        &self.tangential[..self.n_tangential]
    }
}

fn for_each_edge(grid: &RegularGrid, mut f: impl FnMut(&Edge)) {
    let (m, n) = (grid.m(), grid.n());
    let (hx, hy) = (grid.hx(), grid.hy());
    let idx = |i: usize, j: usize| j * m + i;
    for j in 0..n {
        for i in 0..m {
            if i + 1 < m {
                // hy·[H11 (u_R − u_L)/hx + H12 ∂u/∂y]
                let (lo, hi) = (idx(i, j), idx(i + 1, j));
                let a = hy / hx;
                let mut e = Edge {
                    lo,
                    hi,
                    x_normal: true,
                    normal: [(lo, -a), (hi, a)],
                    tangential: [(0, 0.0); 8],
                    n_tangential: 0,
                };
                let up = j + 1 < n;
                let down = j > 0;
                let count = 2 * (up as usize + down as usize);
                if count > 0 {
                    let w = 1.0 / count as f64;
                    for ci in [i, i + 1] {
                        if up {
                            e.tangential[e.n_tangential] = (idx(ci, j + 1), w);
                            e.tangential[e.n_tangential + 1] = (idx(ci, j), -w);
                            e.n_tangential += 2;
                        }
                        if down {
                            e.tangential[e.n_tangential] = (idx(ci, j), w);
                            e.tangential[e.n_tangential + 1] = (idx(ci, j - 1), -w);
                            e.n_tangential += 2;
                        }
                    }
                }
                f(&e);
            }
            if j + 1 < n {
                let (lo, hi) = (idx(i, j), idx(i, j + 1));
                let a = hx / hy;
                let mut e = Edge {
                    lo,
                    hi,
                    x_normal: false,
                    normal: [(lo, -a), (hi, a)],
                    tangential: [(0, 0.0); 8],
                    n_tangential: 0,
                };
                let right = i + 1 < m;
                let left = i > 0;
                let count = 2 * (right as usize + left as usize);
                if count > 0 {
                    let w = 1.0 / count as f64;
                    for cj in [j, j + 1] {
                        if right {
                            e.tangential[e.n_tangential] = (idx(i + 1, cj), w);
                            e.tangential[e.n_tangential + 1] = (idx(i, cj), -w);
                            e.n_tangential += 2;
                        }
                        if left {
                            e.tangential[e.n_tangential] = (idx(i, cj), w);
                            e.tangential[e.n_tangential + 1] = (idx(i - 1, cj), -w);
                            e.n_tangential += 2;
                        }
                    }
                }
                f(&e);
            }
        }
    }
}

fn stencil_slot(m: usize, row: usize, col: usize) -> usize {
    let di = (col % m) as isize - (row % m) as isize;
    let dj = (col / m) as isize - (row / m) as isize;
    slot(di, dj)
}

/// Assembles `A` for per-cell `κ²` and `H` entries. `A` is linear in these
/// inputs, so derivative fields give derivative operators.
pub fn assemble_linear(grid: &RegularGrid, kappa2: &[f64], h11: &[f64], h12: &[f64], h22: &[f64]) -> StencilMatrix {
    let m = grid.m();
    let inv_v = 1.0 / grid.cell_area();
    let mut a = StencilMatrix::zeros(m, grid.n());
    for (c, &k) in kappa2.iter().enumerate() {
        a.rows[c][4] += k;
    }
    for_each_edge(grid, |e| {
        let hn = if e.x_normal { 0.5 * (h11[e.lo] + h11[e.hi]) } else { 0.5 * (h22[e.lo] + h22[e.hi]) };
        let ht = 0.5 * (h12[e.lo] + h12[e.hi]);
        let terms = e.normal.iter().map(|&(c, w)| (c, hn * w)).chain(e.tangential().iter().map(|&(c, w)| (c, ht * w)));
        for (c, w) in terms {
            if w == 0.0 {
                continue;
            }
            // Outflow through the edge leaves `lo` and enters `hi`.
            a.rows[e.lo][stencil_slot(m, e.lo, c)] -= w * inv_v;
            a.rows[e.hi][stencil_slot(m, e.hi, c)] += w * inv_v;
        }
    });
    a
}

/// Sensitivities of `Σ_kc ω_kc A_kc` to the per-cell inputs of
/// [`assemble_linear`].
pub fn stencil_sensitivities(grid: &RegularGrid, omega: &StencilMatrix) -> CellSensitivities {
    let m = grid.m();
    let cells = grid.num_cells();
    let inv_v = 1.0 / grid.cell_area();
    let mut s = CellSensitivities {
        kappa2: (0..cells).map(|c| omega.rows[c][4]).collect(),
        h11: vec![0.0; cells],
        h12: vec![0.0; cells],
        h22: vec![0.0; cells],
    };
    let dot = |e: &Edge, terms: &[(usize, f64)]| -> f64 {
        terms
            .iter()
            .map(|&(c, w)| {
                w * (omega.rows[e.hi][stencil_slot(m, e.hi, c)] - omega.rows[e.lo][stencil_slot(m, e.lo, c)])
            })
            .sum::<f64>()
            * inv_v
    };
    for_each_edge(grid, |e| {
        let sn = 0.5 * dot(e, &e.normal);
        let st = 0.5 * dot(e, e.tangential());
        let hn = if e.x_normal { &mut s.h11 } else { &mut s.h22 };
        hn[e.lo] += sn;
        hn[e.hi] += sn;
        s.h12[e.lo] += st;
        s.h12[e.hi] += st;
    });
    s
}

/// Lower-triangular pattern of `Q = AᵀA·V`: every pair of cells within two
/// steps in both directions.
#[derive(Debug, Clone)]
pub struct QPattern {
    m: usize,
    n: usize,
    colptr: Vec<usize>,
    rowidx: Vec<usize>,
    // Position in rowidx of (col, col + offset), offset slot (dj+2)*5+(di+2).
    pos: Vec<[usize; 25]>,
}

impl QPattern {
    pub fn new(grid: &RegularGrid) -> Self {
        let (m, n) = (grid.m(), grid.n());
        let cells = m * n;
        let mut colptr = Vec::with_capacity(cells + 1);
        let mut rowidx = Vec::new();
        let mut pos = vec![[NONE; 25]; cells];
        colptr.push(0);
        for b in 0..cells {
            let (i, j) = ((b % m) as isize, (b / m) as isize);
            for dj in 0..=2isize {
                for di in -2..=2isize {
                    if dj == 0 && di < 0 {
                        continue;
                    }
                    let (ai, aj) = (i + di, j + dj);
                    if ai < 0 || ai >= m as isize || aj >= n as isize {
                        continue;
                    }
                    pos[b][((dj + 2) * 5 + di + 2) as usize] = rowidx.len();
                    rowidx.push(aj as usize * m + ai as usize);
                }
            }
            colptr.push(rowidx.len());
        }
        Self { m, n, colptr, rowidx, pos }
    }

    pub fn nnz(&self) -> usize {
        self.rowidx.len()
    }

    pub fn colptr(&self) -> &[usize] {
        &self.colptr
    }

    pub fn rowidx(&self) -> &[usize] {
        &self.rowidx
    }

    /// Storage position of entry `(a, b)` in either triangle, if in the pattern.
    pub fn lookup(&self, a: usize, b: usize) -> Option<usize> {
        let (a, b) = if a >= b { (a, b) } else { (b, a) };
        let di = (a % self.m) as isize - (b % self.m) as isize;
        let dj = (a / self.m) as isize - (b / self.m) as isize;
        if di.abs() > 2 || dj > 2 {
            return None;
        }
        let p = self.pos[b][((dj + 2) * 5 + di + 2) as usize];
        (p != NONE).then_some(p)
    }

    fn position(&self, a: usize, b: usize) -> usize {
        let di = (a % self.m) as isize - (b % self.m) as isize;
        let dj = (a / self.m) as isize - (b / self.m) as isize;
        self.pos[b][((dj + 2) * 5 + di + 2) as usize]
    }

    /// Values of `AᵀA·V` on this pattern.
    pub fn product(&self, a: &StencilMatrix, volume: f64) -> Result<SymSparse> {
        if a.m != self.m || a.n != self.n {
            return Err(Error::Dimension("operator and pattern grids differ".into()));
        }
        let mut values = vec![0.0; self.rowidx.len()];
        let mut cols = [0usize; 9];
        let mut vals = [0.0; 9];
        for k in 0..a.dim() {
            let mut len = 0;
            for s in 0..9 {
                if let Some(c) = a.column(k, s) {
                    if a.rows[k][s] != 0.0 {
                        cols[len] = c;
                        vals[len] = a.rows[k][s];
                        len += 1;
                    }
                }
            }
            for p in 0..len {
                for q in 0..len {
                    if cols[p] >= cols[q] {
                        values[self.position(cols[p], cols[q])] += volume * vals[p] * vals[q];
                    }
                }
            }
        }
        SymSparse::from_lower_csc(self.m * self.n, self.colptr.clone(), self.rowidx.clone(), values)
    }
}

/// Discretized operator `A(κ², H)` and precision `Q = AᵀA·V`.
#[derive(Debug, Clone)]
pub struct SpdeOperator {
    grid: RegularGrid,
    a: StencilMatrix,
    q: SymSparse,
}

impl SpdeOperator {
    pub fn assemble(grid: &RegularGrid, fields: &CoefficientFields) -> Result<Self> {
        Self::assemble_with(grid, &QPattern::new(grid), fields)
    }

    /// As [`SpdeOperator::assemble`] with a precomputed pattern for `grid`.
    pub fn assemble_with(grid: &RegularGrid, pattern: &QPattern, fields: &CoefficientFields) -> Result<Self> {
        if fields.len() != grid.num_cells() {
            return Err(Error::Dimension(format!("{} field values for {} cells", fields.len(), grid.num_cells())));
        }
        fields.check()?;
        let cells = grid.num_cells();
        let mut h = [vec![0.0; cells], vec![0.0; cells], vec![0.0; cells]];
        for c in 0..cells {
            let v = fields.h(c);
            for t in 0..3 {
                h[t][c] = v[t];
            }
        }
        let a = assemble_linear(grid, &fields.kappa2, &h[0], &h[1], &h[2]);
        let q = pattern.product(&a, grid.cell_area())?;
        Ok(Self { grid: grid.clone(), a, q })
    }

    pub fn grid(&self) -> &RegularGrid {
        &self.grid
    }

    pub fn a(&self) -> &StencilMatrix {
        &self.a
    }

    pub fn q(&self) -> &SymSparse {
        &self.q
    }

    pub fn volume(&self) -> f64 {
        self.grid.cell_area()
    }
}

/// `∂A/∂α` for weight `index` of `field`.
pub fn d_assemble(
    grid: &RegularGrid,
    fields: &CoefficientFields,
    basis: &BasisMatrix,
    field: FieldId,
    index: usize,
) -> Result<StencilMatrix> {
    if index >= basis.ncols() {
        return Err(Error::IndexOutOfRange { index, len: basis.ncols() });
    }
    if basis.nrows() != grid.num_cells() || fields.len() != grid.num_cells() {
        return Err(Error::Dimension("basis, fields and grid disagree on the number of cells".into()));
    }
    let f: Vec<f64> = (0..basis.nrows()).map(|r| basis.get(r, index)).collect();
    let d = fields.derivative(field, &f);
    Ok(assemble_linear(grid, &d[0], &d[1], &d[2], &d[3]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use crate::sparse::{CholFactor, Ordering};
    use crate::spline::TensorBasis2D;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(m: usize, n: usize, w: f64, h: f64) -> RegularGrid {
        RegularGrid::new(Domain::new(0.0, w, 0.0, h).unwrap(), m, n).unwrap()
    }

    fn random_alpha(len: usize, rng: &mut ChaCha8Rng, scale: f64) -> [Vec<f64>; 4] {
        std::array::from_fn(|_| (0..len).map(|_| rng.gen_range(-scale..scale)).collect())
    }

    #[test]
    fn materialize_constant_and_h() {
        let g = grid(3, 2, 3.0, 2.0);
        let basis = TensorBasis2D::constant(g.domain()).unwrap().eval_basis_matrix(&g).unwrap();
        let z = [0.0];
        let f = CoefficientFields::materialize(&basis, [&z, &z, &z, &z]).unwrap();
        assert!(f.kappa2.iter().chain(&f.gamma).all(|&v| v == 1.0));
        assert_eq!(f.h(0), [1.0, 0.0, 1.0]);
        assert_eq!(CoefficientFields::constant(1, 1.0, 1.0, 1.0, 0.0).h(0), [2.0, 0.0, 1.0]);
        let h = CoefficientFields::constant(1, 1.0, 2.0, 1.0, 1.0).h(0);
        let e = nalgebra::Matrix2::new(h[0], h[1], h[1], h[2]).symmetric_eigen();
        let mut ev: Vec<f64> = e.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - 2.0).abs() < 1e-12 && (ev[1] - 4.0).abs() < 1e-12);
        let nan = [f64::NAN];
        assert!(matches!(CoefficientFields::materialize(&basis, [&z, &nan, &z, &z]), Err(Error::Parameter(_))));
    }

    #[test]
    fn constant_vector_sees_only_mass_term() {
        let g = grid(7, 5, 3.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = CoefficientFields {
            kappa2: (0..35).map(|_| rng.gen_range(0.5..2.0)).collect(),
            gamma: (0..35).map(|_| rng.gen_range(0.5..2.0)).collect(),
            vx: (0..35).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            vy: (0..35).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let op = SpdeOperator::assemble(&g, &f).unwrap();
        let au = op.a().mul_vec(&vec![2.0; 35]);
        for c in 0..35 {
            assert!((au[c] - 2.0 * f.kappa2[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn isotropic_interior_stencil() {
        let g = grid(5, 5, 5.0, 5.0);
        let op = SpdeOperator::assemble(&g, &CoefficientFields::constant(25, 1.0, 1.0, 0.0, 0.0)).unwrap();
        let row = op.a().row(12);
        assert_eq!(*row, [0.0, -1.0, 0.0, -1.0, 5.0, -1.0, 0.0, -1.0, 0.0]);
        // Corner cell: two zero-flux edges.
        assert_eq!(op.a().get(0, 0), 3.0);
    }

    #[test]
    fn precision_pattern_and_product() {
        let g = grid(10, 10, 10.0, 10.0);
        let op = SpdeOperator::assemble(&g, &CoefficientFields::constant(100, 1.0, 1.0, 0.6, 0.4)).unwrap();
        let q = op.q().to_dense();
        for r in 0..100 {
            let nz = (0..100).filter(|&c| q[(r, c)] != 0.0).count();
            assert!(nz <= 25);
            let (i, j) = (r % 10, r / 10);
            if (2..8).contains(&i) && (2..8).contains(&j) {
                assert_eq!(nz, 25, "row {r}");
            }
        }
        let a = op.a().to_dense();
        let dense = a.transpose() * &a * op.volume();
        assert!((&q - &dense).amax() < 1e-12 * dense.amax());

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let qx = op.q().mul_vec(&x);
        let aax = op.a().tmul_vec(&op.a().mul_vec(&x));
        let scale = qx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for c in 0..100 {
            assert!((qx[c] - aax[c] * op.volume()).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn precision_is_positive_definite_for_random_fields() {
        let g = grid(30, 15, 6.0, 3.0);
        let basis = TensorBasis2D::new(g.domain(), 3, 2).unwrap().eval_basis_matrix(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pattern = QPattern::new(&g);
        for _ in 0..20 {
            let al = random_alpha(6, &mut rng, 1.0);
            let f = CoefficientFields::materialize(&basis, [&al[0], &al[1], &al[2], &al[3]]).unwrap();
            let op = SpdeOperator::assemble_with(&g, &pattern, &f).unwrap();
            CholFactor::factorize(op.q(), &Ordering::Amd).unwrap();
        }
    }

    #[test]
    fn rejects_nonpositive_kappa2() {
        let g = grid(3, 3, 1.0, 1.0);
        let mut f = CoefficientFields::constant(9, 1.0, 1.0, 0.0, 0.0);
        f.kappa2[4] = 0.0;
        assert!(matches!(SpdeOperator::assemble(&g, &f), Err(Error::Parameter(_))));
    }

    #[test]
    fn derivative_examples() {
        let g = grid(6, 4, 3.0, 2.0);
        let basis = TensorBasis2D::constant(g.domain()).unwrap().eval_basis_matrix(&g).unwrap();
        let f = CoefficientFields::constant(24, 1.7, 1.0, 0.0, 0.0);
        let d = d_assemble(&g, &f, &basis, FieldId::Kappa2, 0).unwrap();
        let dense = d.to_dense();
        assert!((dense - nalgebra::DMatrix::identity(24, 24) * 1.7).amax() < 1e-15);
        assert_eq!(d_assemble(&g, &f, &basis, FieldId::Vx, 0).unwrap().max_abs(), 0.0);
        assert!(d_assemble(&g, &f, &basis, FieldId::Vx, 1).is_err());
    }

    fn build(g: &RegularGrid, basis: &BasisMatrix, al: &[Vec<f64>; 4]) -> (CoefficientFields, StencilMatrix) {
        let f = CoefficientFields::materialize(basis, [&al[0], &al[1], &al[2], &al[3]]).unwrap();
        let op = SpdeOperator::assemble(g, &f).unwrap();
        (f, op.a().clone())
    }

    #[test]
    fn derivative_matches_central_differences() {
        let g = grid(9, 7, 4.0, 3.0);
        let basis = TensorBasis2D::new(g.domain(), 3, 2).unwrap().eval_basis_matrix(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let al = random_alpha(6, &mut rng, 0.7);
        let (f, _) = build(&g, &basis, &al);
        let eps = 1e-5;
        for field in FieldId::ALL {
            for idx in 0..6 {
                let mut plus = al.clone();
                let mut minus = al.clone();
                plus[field.index()][idx] += eps;
                minus[field.index()][idx] -= eps;
                let ap = build(&g, &basis, &plus).1.to_dense();
                let am = build(&g, &basis, &minus).1.to_dense();
                let fd = (ap - am) / (2.0 * eps);
                let d = d_assemble(&g, &f, &basis, field, idx).unwrap().to_dense();
                assert!((fd - d).amax() < 1e-6, "{field:?} {idx}");
            }
        }
    }

    #[test]
    fn sensitivities_agree_with_derivative_operators() {
        let g = grid(8, 6, 4.0, 3.0);
        let basis = TensorBasis2D::new(g.domain(), 2, 3).unwrap().eval_basis_matrix(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let al = random_alpha(6, &mut rng, 0.5);
        let (f, _) = build(&g, &basis, &al);
        let mut omega = StencilMatrix::zeros(8, 6);
        for k in 0..48 {
            for s in 0..9 {
                omega.row_mut(k)[s] = rng.gen_range(-1.0..1.0);
            }
        }
        let grad = f.pullback(&basis, &stencil_sensitivities(&g, &omega));
        for field in FieldId::ALL {
            for idx in 0..6 {
                let d = d_assemble(&g, &f, &basis, field, idx).unwrap();
                let mut direct = 0.0;
                d.for_each(|r, c, v| direct += v * omega.get(r, c));
                let got = grad[field.index()][idx];
                assert!((got - direct).abs() < 1e-10 * (1.0 + direct.abs()), "{field:?} {idx}: {got} vs {direct}");
            }
        }
    }

    #[test]
    fn degenerate_grids() {
        let g = grid(1, 1, 1.0, 1.0);
        let op = SpdeOperator::assemble(&g, &CoefficientFields::constant(1, 2.0, 1.0, 0.3, 0.2)).unwrap();
        assert_eq!(op.q().to_dense()[(0, 0)], 4.0);
        let g = grid(4, 1, 4.0, 1.0);
        let op = SpdeOperator::assemble(&g, &CoefficientFields::constant(4, 1.0, 1.0, 0.3, 0.2)).unwrap();
        assert!(op.a().mul_vec(&[1.0; 4]).iter().all(|v| (v - 1.0).abs() < 1e-14));
    }
}
