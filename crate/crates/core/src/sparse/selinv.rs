use std::sync::Arc;

use super::{CholFactor, SymbolicCholesky};

const NONE: usize = usize::MAX;

/// Entries of `A^{-1}` on the pattern of the Cholesky factor of `A`
/// (lower triangle plus its mirror), from the Takahashi recursions.
#[derive(Debug, Clone)]
pub struct SelectedInverse {
    symbolic: Arc<SymbolicCholesky>,
    values: Vec<f64>,
}

impl SelectedInverse {
    pub(super) fn compute(factor: &CholFactor) -> Self {
        let s = factor.symbolic();
        let lp = &s.l_colptr;
        let li = &s.l_rowidx;
        let lx = factor.l_values();
        let n = s.dim();
        let mut sigma = vec![0.0; lx.len()];
        let mut pos_of = vec![NONE; n];
        let mut acc: Vec<f64> = Vec::new();

        for j in (0..n).rev() {
            let dj = lp[j];
            let rows = &li[dj + 1..lp[j + 1]];
            let lj = &lx[dj + 1..lp[j + 1]];
            for (b, &r) in rows.iter().enumerate() {
                pos_of[r] = b;
            }
            acc.clear();
            acc.resize(rows.len(), 0.0);

            for (a, &k) in rows.iter().enumerate() {
                let lkj = lj[a];
                for p in lp[k]..lp[k + 1] {
                    let r = li[p];
                    let b = pos_of[r];
                    if b == NONE {
                        continue;
                    }
                    let sv = sigma[p];
                    acc[b] += lkj * sv;
                    if r != k {
                        acc[a] += lj[b] * sv;
                    }
                }
            }

            let ljj = lx[dj];
            let mut dsum = 0.0;
            for b in 0..rows.len() {
                let v = -acc[b] / ljj;
                sigma[dj + 1 + b] = v;
                dsum += lj[b] * v;
            }
            sigma[dj] = 1.0 / (ljj * ljj) - dsum / ljj;
            for &r in rows {
                pos_of[r] = NONE;
            }
        }
        Self { symbolic: Arc::clone(s), values: sigma }
    }

    pub fn dim(&self) -> usize {
        self.symbolic.dim()
    }

    /// Entry `(i, j)` of the inverse in the original ordering, or `None`
    /// when it lies outside the factor pattern.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let s = &self.symbolic;
        let (pi, pj) = (*s.iperm().get(i)?, *s.iperm().get(j)?);
        let (r, c) = if pi >= pj { (pi, pj) } else { (pj, pi) };
        let range = s.l_colptr[c]..s.l_colptr[c + 1];
        let rows = &s.l_rowidx[range.clone()];
        rows.binary_search(&r).ok().map(|b| self.values[range.start + b])
    }

    /// Diagonal of the inverse in the original ordering.
    pub fn diag(&self) -> Vec<f64> {
        let s = &self.symbolic;
        s.iperm().iter().map(|&p| self.values[s.l_colptr[p]]).collect()
    }

    /// Calls `f(i, j, value)` for each stored entry with `i >= j` in the
    /// permuted ordering, passing original indices.
    pub fn for_each(&self, mut f: impl FnMut(usize, usize, f64)) {
        let s = &self.symbolic;
        let perm = s.perm();
        for c in 0..s.dim() {
            for p in s.l_colptr[c]..s.l_colptr[c + 1] {
                f(perm[s.l_rowidx[p]], perm[c], self.values[p]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Ordering, SymSparse};
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse_spd(n: usize, density: f64, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a: DMatrix<f64> = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                if rng.gen::<f64>() < density {
                    let v = rng.gen_range(-1.0..1.0);
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                }
            }
        }
        for i in 0..n {
            let row: f64 = (0..n).map(|j| a[(i, j)].abs()).sum();
            a[(i, i)] = row + 0.5 + rng.gen::<f64>();
        }
        a
    }

    #[test]
    fn diagonal_matrix_inverse() {
        let f = CholFactor::factorize(&SymSparse::diagonal(&[1.0, 4.0, 9.0]), &Ordering::Amd).unwrap();
        let d = f.selected_inverse().diag();
        assert!((d[0] - 1.0).abs() < 1e-15 && (d[1] - 0.25).abs() < 1e-15 && (d[2] - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn matches_dense_inverse_on_pattern() {
        for (seed, ordering) in [(3, Ordering::Amd), (4, Ordering::Natural), (5, Ordering::Amd)] {
            let a = random_sparse_spd(60, 0.06, seed);
            let inv = a.clone().try_inverse().unwrap();
            let s = SymSparse::from_dense(&a);
            let sel = CholFactor::factorize(&s, &ordering).unwrap().selected_inverse();
            let mut count = 0;
            sel.for_each(|i, j, v| {
                assert!((v - inv[(i, j)]).abs() < 1e-8 * inv.amax(), "({i},{j}) {v} vs {}", inv[(i, j)]);
                count += 1;
            });
            assert!(count >= s.nnz());
            // Every entry of A's pattern is available.
            for c in 0..60 {
                for &r in s.column(c).0 {
                    let v = sel.get(r, c).unwrap();
                    assert_eq!(Some(v), sel.get(c, r));
                }
            }
        }
    }

    #[test]
    fn trace_identity() {
        // tr(A^{-1} A) = n needs only entries on A's pattern.
        let a = random_sparse_spd(70, 0.05, 9);
        let s = SymSparse::from_dense(&a);
        let sel = CholFactor::factorize(&s, &Ordering::Amd).unwrap().selected_inverse();
        let mut tr = 0.0;
        for c in 0..70 {
            let (rows, vals) = s.column(c);
            for (&r, &v) in rows.iter().zip(vals) {
                let w = if r == c { 1.0 } else { 2.0 };
                tr += w * v * sel.get(r, c).unwrap();
            }
        }
        assert!((tr - 70.0).abs() < 1e-9);
    }
}
