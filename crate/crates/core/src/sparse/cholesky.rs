use std::sync::Arc;

use crate::error::{Error, Result, Stage};

use super::{Ordering, SelectedInverse, SymSparse};

const NONE: usize = usize::MAX;

/// Ordering, elimination tree and factor pattern for one sparsity pattern.
/// Reusable across matrices sharing that pattern.
#[derive(Debug)]
pub struct SymbolicCholesky {
    n: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    parent: Vec<usize>,
    src_colptr: Vec<usize>,
    src_rowidx: Vec<usize>,
    // Upper triangle of P A P^T in CSC form, and where each source entry lands.
    c_colptr: Vec<usize>,
    c_rowidx: Vec<usize>,
    src_to_c: Vec<usize>,
    pub(super) l_colptr: Vec<usize>,
    pub(super) l_rowidx: Vec<usize>,
}

impl SymbolicCholesky {
    pub fn analyze(a: &SymSparse, ordering: &Ordering) -> Result<Self> {
        let n = a.dim();
        let perm = ordering.permutation(a)?;
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        let mut cols: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for c in 0..n {
            for p in a.colptr()[c]..a.colptr()[c + 1] {
                let r = a.rowidx()[p];
                let (pr, pc) = (iperm[r], iperm[c]);
                let (row, col) = if pr <= pc { (pr, pc) } else { (pc, pr) };
                cols[col].push((row, p));
            }
        }
        let mut c_colptr = Vec::with_capacity(n + 1);
        let mut c_rowidx = Vec::with_capacity(a.nnz());
        let mut src_to_c = vec![0usize; a.nnz()];
        c_colptr.push(0);
        for mut col in cols {
            col.sort_unstable();
            for (row, src) in col {
                src_to_c[src] = c_rowidx.len();
                c_rowidx.push(row);
            }
            c_colptr.push(c_rowidx.len());
        }

        let parent = etree(n, &c_colptr, &c_rowidx);

        // Column counts of L, then row indices; rows arrive in increasing order.
        let mut stack = vec![0usize; n];
        let mut mark = vec![false; n];
        let mut counts = vec![1usize; n];
        for k in 0..n {
            let top = ereach(k, &c_colptr, &c_rowidx, &parent, &mut stack, &mut mark);
            for &i in &stack[top..] {
                counts[i] += 1;
            }
        }
        let mut l_colptr = vec![0usize; n + 1];
        for k in 0..n {
            l_colptr[k + 1] = l_colptr[k] + counts[k];
        }
        let mut next = l_colptr.clone();
        let mut l_rowidx = vec![0usize; l_colptr[n]];
        for k in 0..n {
            l_rowidx[next[k]] = k;
            next[k] += 1;
            let top = ereach(k, &c_colptr, &c_rowidx, &parent, &mut stack, &mut mark);
            for &i in &stack[top..] {
                l_rowidx[next[i]] = k;
                next[i] += 1;
            }
        }
        // ereach lists columns in topological order; the loop above visits each
        // row k once per column, in increasing k, so columns are sorted.

        Ok(Self {
            n,
            perm,
            iperm,
            parent,
            src_colptr: a.colptr().to_vec(),
            src_rowidx: a.rowidx().to_vec(),
            c_colptr,
            c_rowidx,
            src_to_c,
            l_colptr,
            l_rowidx,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `perm[new] = old`.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// `iperm[old] = new`.
    pub fn iperm(&self) -> &[usize] {
        &self.iperm
    }

    /// Number of stored entries in the factor, diagonal included.
    pub fn factor_nnz(&self) -> usize {
        self.l_rowidx.len()
    }

    pub fn matches(&self, a: &SymSparse) -> bool {
        a.dim() == self.n && a.colptr() == self.src_colptr.as_slice() && a.rowidx() == self.src_rowidx.as_slice()
    }

    /// Numeric factorization of a matrix with the analysed pattern.
    pub fn factorize(self: &Arc<Self>, a: &SymSparse) -> Result<CholFactor> {
        if !self.matches(a) {
            return Err(Error::Dimension("matrix pattern differs from the analysed pattern".into()));
        }
        let n = self.n;
        let mut cx = vec![0.0; self.c_rowidx.len()];
        for (src, &dst) in self.src_to_c.iter().enumerate() {
            cx[dst] = a.values()[src];
        }

        let lp = &self.l_colptr;
        let li = &self.l_rowidx;
        let mut lx = vec![0.0; li.len()];
        let mut next: Vec<usize> = lp[..n].to_vec();
        let mut x = vec![0.0; n];
        let mut stack = vec![0usize; n];
        let mut mark = vec![false; n];

        for k in 0..n {
            let top = ereach(k, &self.c_colptr, &self.c_rowidx, &self.parent, &mut stack, &mut mark);
            for p in self.c_colptr[k]..self.c_colptr[k + 1] {
                x[self.c_rowidx[p]] = cx[p];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..] {
                let lki = x[i] / lx[lp[i]];
                x[i] = 0.0;
                for p in lp[i] + 1..next[i] {
                    x[li[p]] -= lx[p] * lki;
                }
                d -= lki * lki;
                debug_assert_eq!(li[next[i]], k);
                lx[next[i]] = lki;
                next[i] += 1;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { stage: Stage::Other, pivot: self.perm[k] });
            }
            lx[next[k]] = d.sqrt();
            next[k] += 1;
        }

        let logdet = 2.0 * (0..n).map(|j| lx[lp[j]].ln()).sum::<f64>();
        Ok(CholFactor { symbolic: Arc::clone(self), lx, logdet })
    }
}

fn etree(n: usize, colptr: &[usize], rowidx: &[usize]) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for &start in &rowidx[colptr[k]..colptr[k + 1]] {
            let mut i = start;
            while i != NONE && i < k {
                let inext = ancestor[i];
                ancestor[i] = k;
                if inext == NONE {
                    parent[i] = k;
                }
                i = inext;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of L (columns `< k`), written to
/// `stack[top..]` in topological order. `mark` is left cleared.
fn ereach(
    k: usize,
    colptr: &[usize],
    rowidx: &[usize],
    parent: &[usize],
    stack: &mut [usize],
    mark: &mut [bool],
) -> usize {
    let n = stack.len();
    let mut top = n;
    mark[k] = true;
    for &start in &rowidx[colptr[k]..colptr[k + 1]] {
        if start > k {
            continue;
        }
        let mut i = start;
        let mut len = 0;
        while !mark[i] {
            stack[len] = i;
            len += 1;
            mark[i] = true;
            i = parent[i];
        }
        while len > 0 {
            len -= 1;
            top -= 1;
            stack[top] = stack[len];
        }
    }
    for &i in &stack[top..] {
        mark[i] = false;
    }
    mark[k] = false;
    top
}

/// Sparse Cholesky factor `P A P^T = L L^T`.
#[derive(Debug, Clone)]
pub struct CholFactor {
    symbolic: Arc<SymbolicCholesky>,
    lx: Vec<f64>,
    logdet: f64,
}

impl CholFactor {
    /// Analyses and factorizes in one step.
    pub fn factorize(a: &SymSparse, ordering: &Ordering) -> Result<Self> {
        Arc::new(SymbolicCholesky::analyze(a, ordering)?).factorize(a)
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    pub fn dim(&self) -> usize {
        self.symbolic.n
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub(super) fn l_values(&self) -> &[f64] {
        &self.lx
    }

    /// Dense copy of L (permuted ordering), for diagnostics and tests.
    pub fn l_dense(&self) -> nalgebra::DMatrix<f64> {
        let s = &self.symbolic;
        let mut l = nalgebra::DMatrix::zeros(s.n, s.n);
        for j in 0..s.n {
            for p in s.l_colptr[j]..s.l_colptr[j + 1] {
                l[(s.l_rowidx[p], j)] = self.lx[p];
            }
        }
        l
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::Dimension(format!("vector of length {len} for a {}x{} factor", self.dim(), self.dim())));
        }
        Ok(())
    }

    fn lower_solve(&self, y: &mut [f64]) {
        let s = &self.symbolic;
        for j in 0..s.n {
            let p0 = s.l_colptr[j];
            let yj = y[j] / self.lx[p0];
            y[j] = yj;
            if yj != 0.0 {
                for p in p0 + 1..s.l_colptr[j + 1] {
                    y[s.l_rowidx[p]] -= self.lx[p] * yj;
                }
            }
        }
    }

    fn upper_solve(&self, y: &mut [f64]) {
        let s = &self.symbolic;
        for j in (0..s.n).rev() {
            let p0 = s.l_colptr[j];
            let mut acc = y[j];
            for p in p0 + 1..s.l_colptr[j + 1] {
                acc -= self.lx[p] * y[s.l_rowidx[p]];
            }
            y[j] = acc / self.lx[p0];
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_len(b.len())?;
        let perm = &self.symbolic.perm;
        let mut y: Vec<f64> = perm.iter().map(|&old| b[old]).collect();
        self.lower_solve(&mut y);
        self.upper_solve(&mut y);
        let mut x = vec![0.0; b.len()];
        for (new, &old) in perm.iter().enumerate() {
            x[old] = y[new];
        }
        Ok(x)
    }

    /// Solves for several right-hand sides.
    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rhs.iter().map(|b| self.solve(b)).collect()
    }

    /// Maps standard-normal `z` to `P^T L^{-T} z`, a draw with precision `A`.
    pub fn sample(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len(z.len())?;
        let mut w = z.to_vec();
        self.upper_solve(&mut w);
        let mut x = vec![0.0; w.len()];
        for (new, &old) in self.symbolic.perm.iter().enumerate() {
            x[old] = w[new];
        }
        Ok(x)
    }

    /// Entries of `A^{-1}` on the pattern of `L + L^T`.
    pub fn selected_inverse(&self) -> SelectedInverse {
        SelectedInverse::compute(self)
    }
}
