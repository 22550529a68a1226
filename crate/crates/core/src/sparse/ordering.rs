use crate::error::{Error, Result};

use super::SymSparse;

/// Fill-reducing symmetric permutation strategy.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Ordering {
    /// Identity permutation.
    Natural,
    /// Approximate minimum degree.
    #[default]
    Amd,
    /// Caller-supplied permutation; `perm[k]` is the original index placed at position `k`.
    Given(Vec<usize>),
}

impl Ordering {
    /// Permutation `perm` with `perm[new] = old`.
    pub(crate) fn permutation(&self, a: &SymSparse) -> Result<Vec<usize>> {
        let n = a.dim();
        match self {
            Ordering::Natural => Ok((0..n).collect()),
            Ordering::Amd => {
                if n == 0 {
                    return Ok(Vec::new());
                }
                let (colptr, rowidx) = a.full_pattern();
                let control = amd::Control::default();
                let (perm, _, _) = amd::order::<usize>(n, &colptr, &rowidx, &control)
                    .map_err(|status| Error::Dimension(format!("AMD ordering failed: {status:?}")))?;
                Ok(perm)
            }
            Ordering::Given(p) => {
                if p.len() != n {
                    return Err(Error::Dimension(format!("permutation length {} for dimension {n}", p.len())));
                }
                let mut seen = vec![false; n];
                for &k in p {
                    if k >= n || std::mem::replace(&mut seen[k], true) {
                        return Err(Error::Dimension("supplied ordering is not a permutation".into()));
                    }
                }
                Ok(p.clone())
            }
        }
    }
}
