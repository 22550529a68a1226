//! Sparse symmetric positive-definite linear algebra.
//!
//! Matrices are stored as the lower triangle in compressed-column form.
//! Factorizations use a fill-reducing ordering, an up-looking simplicial
//! Cholesky, and the Takahashi recursions for entries of the inverse on the
//! factor's sparsity pattern.

mod cholesky;
mod ordering;
mod selinv;

pub use cholesky::{CholFactor, SymbolicCholesky};
pub use ordering::Ordering;
pub use selinv::SelectedInverse;

use crate::error::{Error, Result};

/// Symmetric sparse matrix holding its lower triangle (diagonal included)
/// in compressed-column form with sorted row indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SymSparse {
    n: usize,
    colptr: Vec<usize>,
    rowidx: Vec<usize>,
    values: Vec<f64>,
}

impl SymSparse {
    /// Builds from raw lower-triangular CSC arrays. Rows must be sorted and
    /// satisfy `row >= col`.
    pub fn from_lower_csc(n: usize, colptr: Vec<usize>, rowidx: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if colptr.len() != n + 1 || rowidx.len() != values.len() || colptr[n] != rowidx.len() {
            return Err(Error::Dimension("inconsistent CSC arrays".into()));
        }
        for c in 0..n {
            let rows = &rowidx[colptr[c]..colptr[c + 1]];
            if rows.iter().any(|&r| r < c || r >= n) || rows.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Dimension(format!("column {c} is not sorted lower-triangular")));
            }
        }
        Ok(Self { n, colptr, rowidx, values })
    }

    /// Builds from `(row, col, value)` triplets. Each entry may be given in
    /// either triangle; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(r, c, v) in triplets {
            if r >= n || c >= n {
                return Err(Error::IndexOutOfRange { index: r.max(c), len: n });
            }
            let (r, c) = if r >= c { (r, c) } else { (c, r) };
            cols[c].push((r, v));
        }
        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowidx = Vec::new();
        let mut values = Vec::new();
        colptr.push(0);
        for mut col in cols {
            col.sort_by_key(|e| e.0);
            for (r, v) in col {
                if rowidx.len() > *colptr.last().unwrap() && *rowidx.last().unwrap() == r {
                    *values.last_mut().unwrap() += v;
                } else {
                    rowidx.push(r);
                    values.push(v);
                }
            }
            colptr.push(rowidx.len());
        }
        Ok(Self { n, colptr, rowidx, values })
    }

    /// Lower triangle of a dense symmetric matrix, keeping exact zeros out.
    pub fn from_dense(a: &nalgebra::DMatrix<f64>) -> Self {
        let n = a.nrows();
        let mut trip = Vec::new();
        for c in 0..n {
            for r in c..n {
                if a[(r, c)] != 0.0 {
                    trip.push((r, c, a[(r, c)]));
                }
            }
        }
        Self::from_triplets(n, &trip).expect("dense input is square")
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self { n, colptr: (0..=n).collect(), rowidx: (0..n).collect(), values: d.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries (lower triangle).
    pub fn nnz(&self) -> usize {
        self.rowidx.len()
    }

    pub fn colptr(&self) -> &[usize] {
        &self.colptr
    }

    pub fn rowidx(&self) -> &[usize] {
        &self.rowidx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Rows and values stored in column `c` (rows `>= c`).
    pub fn column(&self, c: usize) -> (&[usize], &[f64]) {
        let span = self.colptr[c]..self.colptr[c + 1];
        (&self.rowidx[span.clone()], &self.values[span])
    }

    /// Entry `(i, j)`; zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let (rows, vals) = self.column(c);
        rows.binary_search(&r).map_or(0.0, |p| vals[p])
    }

    /// Whether `(i, j)` is a stored position.
    pub fn contains(&self, i: usize, j: usize) -> bool {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.column(c).0.binary_search(&r).is_ok()
    }

    /// `A x` using both triangles.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for c in 0..self.n {
            let (rows, vals) = self.column(c);
            for (&r, &v) in rows.iter().zip(vals) {
                y[r] += v * x[c];
                if r != c {
                    y[c] += v * x[r];
                }
            }
        }
        y
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Full symmetric pattern (both triangles, diagonal included) in CSC form.
    pub(crate) fn full_pattern(&self) -> (Vec<usize>, Vec<usize>) {
        let mut counts = vec![0usize; self.n];
        for c in 0..self.n {
            for &r in self.column(c).0 {
                counts[c] += 1;
                if r != c {
                    counts[r] += 1;
                }
            }
        }
        let mut colptr = vec![0usize; self.n + 1];
        for c in 0..self.n {
            colptr[c + 1] = colptr[c] + counts[c];
        }
        let mut next = colptr.clone();
        let mut rowidx = vec![0usize; colptr[self.n]];
        for c in 0..self.n {
            for &r in self.column(c).0 {
                rowidx[next[c]] = r;
                next[c] += 1;
                if r != c {
                    rowidx[next[r]] = c;
                    next[r] += 1;
                }
            }
        }
        for c in 0..self.n {
            rowidx[colptr[c]..colptr[c + 1]].sort_unstable();
        }
        (colptr, rowidx)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut a = nalgebra::DMatrix::zeros(self.n, self.n);
        for c in 0..self.n {
            let (rows, vals) = self.column(c);
            for (&r, &v) in rows.iter().zip(vals) {
                a[(r, c)] = v;
                a[(c, r)] = v;
            }
        }
        a
    }

    pub fn same_pattern(&self, other: &SymSparse) -> bool {
        self.n == other.n && self.colptr == other.colptr && self.rowidx == other.rowidx
    }
}
